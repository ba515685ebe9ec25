"""Writes the solver fixtures with objectives from exhaustive enumeration."""

import itertools
import json
import math
import random
from pathlib import Path

HERE = Path(__file__).parent


def u2i_optimum(weights, chi_max):
    rows, cols = len(weights), len(weights[0])
    best = 0.0
    for owners in itertools.product(range(rows + 1), repeat=cols):
        load = [0] * rows
        total = 0.0
        for k, o in enumerate(owners):
            if o:
                load[o - 1] += 1
                total += weights[o - 1][k]
        if max(load) <= chi_max:
            best = max(best, total)
    return best


def u2u_optimum(inst):
    n, k = len(inst["signal"]), inst["n_subchannels"]
    best = None
    for bits in itertools.product((0, 1), repeat=n * k):
        psi = [bits[l * k:(l + 1) * k] for l in range(n)]
        ok = True
        for l in range(n):
            if sum(psi[l]) > inst["chi_max"]:
                ok = False
                break
            rate = 0.0
            for c in range(k):
                if psi[l][c] and not inst["blocked"][l][c]:
                    u2u = sum(inst["cross"][l][m][c] for m in range(n) if m != l and psi[m][c])
                    rate += math.log2(1 + inst["signal"][l][c] / (inst["fixed_interference"][l][c] + u2u))
            if rate < inst["r_min"]:
                ok = False
                break
        if not ok:
            continue
        obj = 0.0
        for c in range(k):
            s = inst["channel_signal"][c]
            if s is not None:
                leak = sum(inst["leak"][l][c] for l in range(n) if psi[l][c])
                obj += math.log2(1 + s / (inst["noise"] + leak))
        best = obj if best is None else max(best, obj)
    return best


def u2u_instance(rng, n, k, r_min):
    lu = lambda lo, hi: 10 ** rng.uniform(lo, hi)
    noise = 2.5e-13
    return {
        "n_subchannels": k,
        "r_min": r_min,
        "chi_max": 2,
        "noise": noise,
        "signal": [[lu(-10.5, -8.0) for _ in range(k)] for _ in range(n)],
        "cross": [[[0.0 if l == m else lu(-13.0, -10.0) for _ in range(k)] for m in range(n)] for l in range(n)],
        "fixed_interference": [[noise + lu(-14.0, -11.0) for _ in range(k)] for _ in range(n)],
        "blocked": [[c == l for c in range(k)] for l in range(n)],
        "channel_signal": [lu(-12.0, -9.0) if c != k - 1 else None for c in range(k)],
        "leak": [[lu(-14.0, -11.0) for _ in range(k)] for _ in range(n)],
    }


def dump(name, instance, expected):
    body = {"instance": instance}
    if expected is not None:
        body["expected_objective"] = expected
    (HERE / name).write_text(json.dumps(body, indent=1) + "\n")


def main():
    rng = random.Random(7)
    weights = [[round(rng.uniform(0, 12), 6) for _ in range(4)] for _ in range(4)]
    dump("u2i_small.json", {"weights": weights, "chi_max": 2}, u2i_optimum(weights, 2))
    inst = u2u_instance(rng, 3, 4, 8.0)
    dump("u2u_small.json", inst, u2u_optimum(inst))
    bad = u2u_instance(rng, 2, 3, 1000.0)
    assert u2u_optimum(bad) is None
    dump("u2u_infeasible.json", bad, None)


if __name__ == "__main__":
    main()
