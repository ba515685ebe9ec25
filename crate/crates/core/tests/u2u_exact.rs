use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use uav2x_core::alloc_u2u::{
    branch_and_bound, constraint_upper_bound, fixations, is_feasible, lfss, objective_upper_bound, u2u_objective,
    BnbNode, BnbOptions, Fixation, VarState,
};
use uav2x_core::{PsiMatrix, U2uInstance};

fn log_uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    10f64.powf(rng.gen_range(lo..hi))
}

pub fn random_instance(rng: &mut ChaCha8Rng, n: usize, k: usize) -> U2uInstance {
    let noise = 2.5e-13;
    let r_min = rng.gen_range(0.0..12.0);
    U2uInstance {
        n_subchannels: k,
        r_min,
        chi_max: rng.gen_range(1..=k.min(3)),
        noise,
        signal: (0..n).map(|_| (0..k).map(|_| log_uniform(rng, -10.5, -8.0)).collect()).collect(),
        cross: (0..n)
            .map(|l| {
                (0..n)
                    .map(|m| (0..k).map(|_| if l == m { 0.0 } else { log_uniform(rng, -13.0, -10.0) }).collect())
                    .collect()
            })
            .collect(),
        fixed_interference: (0..n).map(|_| (0..k).map(|_| noise + log_uniform(rng, -14.0, -11.0)).collect()).collect(),
        blocked: (0..n).map(|_| (0..k).map(|_| rng.gen_bool(0.1)).collect()).collect(),
        channel_signal: (0..k).map(|_| rng.gen_bool(0.85).then(|| log_uniform(rng, -12.0, -9.0))).collect(),
        leak: (0..n).map(|_| (0..k).map(|_| log_uniform(rng, -14.0, -11.0)).collect()).collect(),
    }
}

fn all_psi(n: usize, k: usize) -> impl Iterator<Item = PsiMatrix> {
    (0u32..1 << (n * k)).map(move |bits| {
        let mut psi = PsiMatrix::zeros(n, k);
        for i in 0..n * k {
            psi.set(i / k, i % k, bits >> i & 1 == 1);
        }
        psi
    })
}

fn brute_force(inst: &U2uInstance) -> Option<f64> {
    all_psi(inst.n_links(), inst.n_subchannels)
        .filter(|p| is_feasible(p, inst))
        .map(|p| u2u_objective(&p, inst))
        .reduce(f64::max)
}

/// Whether `psi` agrees with every fixed variable of `node`.
fn completes(node: &BnbNode, psi: &PsiMatrix) -> bool {
    (0..psi.rows()).all(|l| {
        (0..psi.cols()).all(|k| match node.get(l, k) {
            VarState::Free => true,
            VarState::One => psi.get(l, k),
            VarState::Zero => !psi.get(l, k),
        })
    })
}

#[test]
fn bnb_matches_exhaustive_search() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut checked = 0;
    while checked < 200 {
        let n = rng.gen_range(1..=3);
        let k = rng.gen_range(1..=12 / n).min(6);
        let inst = random_instance(&mut rng, n, k);
        let Ok(seed) = lfss(&inst) else { continue };
        let best = brute_force(&inst).expect("LFSS found a feasible point");
        let out = branch_and_bound(&inst, &seed, &BnbOptions::unbounded()).unwrap();
        assert!(is_feasible(&out.psi, &inst));
        assert!((out.objective - best).abs() <= 1e-9 * best.abs().max(1e-300), "{} vs {best}", out.objective);
        assert!(out.objective >= u2u_objective(&seed, &inst));
        checked += 1;
    }
}

#[test]
fn bounds_and_fixations_are_sound() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..300 {
        let (n, k) = (2, 3);
        let inst = random_instance(&mut rng, n, k);
        let mut node = BnbNode::root(&inst);
        for l in 0..n {
            for kk in 0..k {
                if node.get(l, kk) == VarState::Free {
                    match rng.gen_range(0..3) {
                        0 => node.set(l, kk, VarState::Zero),
                        1 => node.set(l, kk, VarState::One),
                        _ => {}
                    }
                }
            }
        }
        let subtree: Vec<PsiMatrix> = all_psi(n, k).filter(|p| completes(&node, p)).collect();
        let ub = objective_upper_bound(&inst, &node);
        for p in &subtree {
            assert!(u2u_objective(p, &inst) <= ub * (1.0 + 1e-12));
            for l in 0..n {
                assert!(uav2x_core::alloc_u2u::link_rate(p, &inst, l) <= constraint_upper_bound(&inst, &node, l) * (1.0 + 1e-12));
            }
        }
        let f_lb = rng.gen_range(0.0..1.0) * ub;
        if let Fixation::Fix(fixed) = fixations(&inst, &node, f_lb) {
            for (l, kk, v) in fixed {
                // the opposite value admits no feasible completion beating f_lb
                for p in subtree.iter().filter(|p| p.get(l, kk) != v) {
                    assert!(!(is_feasible(p, &inst) && u2u_objective(p, &inst) > f_lb * (1.0 + 1e-12)));
                }
            }
        }
    }
}
