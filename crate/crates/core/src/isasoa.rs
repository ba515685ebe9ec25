//! Per-slot iterative allocation and speed optimization, and the greedy
//! baseline it is compared against.

use serde::{Deserialize, Serialize};

use crate::alloc_u2i::{solve_u2i, AssignmentInstance};
use crate::alloc_u2u::{branch_and_bound, is_feasible, lfss, u2u_objective, BnbOptions, TraceEvent, U2uInstance};
use crate::channel::{rates_from_powers, ChannelParams, LinkLayout, LinkPowers, RateReport};
use crate::error::Result;
use crate::matrix::{PhiMatrix, PsiMatrix};
use crate::scalar::Scalar;
use crate::scenario::{ScenarioState, Vec3};
use crate::speed::{trajectory_bounds, SearchOptions, SpeedBounds, SpeedProblem};

/// How UAVs are split into U2I and U2U sets each slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Categorization {
    /// U2U when the interference-free U2I SNR is below the threshold.
    Threshold,
    /// The `n_u2u` lowest-SNR UAVs are U2U.
    Forced,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, bound(deserialize = "T: Scalar + Deserialize<'de>"))]
pub struct AlgorithmParams<T> {
    pub chi_max: usize,
    /// Minimum U2U rate, bits/s/Hz.
    pub r_min: T,
    pub eps: T,
    pub max_iter: usize,
    /// Initial speed; `v_max / 2` when absent.
    #[serde(default)]
    pub v0: Option<T>,
    /// Branch-and-bound node budget; `None` searches exhaustively.
    #[serde(default)]
    pub bnb_node_budget: Option<u64>,
    /// Speed grid resolution; `v_max / 100` when absent.
    #[serde(default)]
    pub speed_grid_step: Option<T>,
    #[serde(default)]
    pub speed_refine_tol: Option<T>,
    pub snr_threshold_db: T,
    pub categorization: Categorization,
    /// U2U count in forced mode.
    pub n_u2u: usize,
}

impl<T: Scalar> Default for AlgorithmParams<T> {
    fn default() -> Self {
        Self {
            chi_max: 2,
            r_min: T::of(10.0),
            eps: T::of(0.1),
            max_iter: 50,
            v0: None,
            bnb_node_budget: Some(1_000_000),
            speed_grid_step: None,
            speed_refine_tol: None,
            snr_threshold_db: T::of(10.0),
            categorization: Categorization::Forced,
            n_u2u: 5,
        }
    }
}

impl<T: Scalar> AlgorithmParams<T> {
    pub fn validate(&self) -> Result<()> {
        use crate::error::Error;
        if !(self.r_min >= T::zero() && self.r_min.is_finite()) {
            return Err(Error::config("r_min must be finite and >= 0"));
        }
        if !(self.eps >= T::zero()) {
            return Err(Error::config("eps must be >= 0"));
        }
        if self.max_iter == 0 {
            return Err(Error::config("max_iter must be >= 1"));
        }
        if self.chi_max == 0 {
            return Err(Error::config("chi_max must be >= 1"));
        }
        for (name, v) in [("v0", self.v0), ("speed_grid_step", self.speed_grid_step), ("speed_refine_tol", self.speed_refine_tol)] {
            if let Some(v) = v {
                if !(v.is_finite() && v >= T::zero()) || (name != "v0" && v == T::zero()) {
                    return Err(Error::config(format!("{name} out of range: {v}")));
                }
            }
        }
        if !self.snr_threshold_db.is_finite() {
            return Err(Error::config("snr_threshold_db must be finite"));
        }
        Ok(())
    }

    pub fn cast<U: Scalar>(&self) -> AlgorithmParams<U> {
        let c = |x: T| U::of(x.to_f64_lossy());
        AlgorithmParams {
            chi_max: self.chi_max,
            r_min: c(self.r_min),
            eps: c(self.eps),
            max_iter: self.max_iter,
            v0: self.v0.map(c),
            bnb_node_budget: self.bnb_node_budget,
            speed_grid_step: self.speed_grid_step.map(c),
            speed_refine_tol: self.speed_refine_tol.map(c),
            snr_threshold_db: c(self.snr_threshold_db),
            categorization: self.categorization,
            n_u2u: self.n_u2u,
        }
    }
}

/// Decision of one slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotDecision<T> {
    pub phi: PhiMatrix,
    pub psi: PsiMatrix,
    /// Speed of every UAV, metres per slot.
    pub speeds: Vec<T>,
    /// Uplink sum-rate at the end-of-slot positions.
    pub objective: T,
    pub iterations: usize,
    pub converged: bool,
    pub rates: RateReport<T>,
    /// U2U links left idle because no allocation met `r_min`.
    pub dropped: Vec<usize>,
    /// Allocated U2U links below `r_min` at the end-of-slot positions.
    pub rate_violations: Vec<usize>,
    /// U2U links whose distance bound the speed step could not meet.
    pub distance_violations: Vec<usize>,
    pub bnb_nodes: u64,
    pub bnb_exhausted: bool,
    #[serde(skip)]
    pub bnb_trace: Vec<TraceEvent>,
}

/// Objective after each iteration, starting from the all-zero allocation.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct IterTrace<T> {
    pub objective: Vec<T>,
}

impl<T: Scalar> IterTrace<T> {
    pub fn is_non_decreasing(&self, slack: T) -> bool {
        self.objective.windows(2).all(|w| w[1] >= w[0] - slack)
    }
}

/// Everything a slot decision depends on.
pub struct SlotProblem<'a, T> {
    /// Categorized and paired network state.
    pub state: &'a ScenarioState<T>,
    pub channel: &'a ChannelParams<T>,
    pub algo: &'a AlgorithmParams<T>,
    pub n_subchannels: usize,
    pub horizon: usize,
    pub v_max: T,
    pub trace_bnb: bool,
}

struct Eval<T> {
    powers: LinkPowers<T>,
    report: RateReport<T>,
}

struct U2uResult<T> {
    psi: PsiMatrix,
    nodes: u64,
    exhausted: bool,
    trace: Vec<TraceEvent>,
    _objective: T,
}

struct SpeedStep<T> {
    speeds: Vec<T>,
    eval: Eval<T>,
    distance_violations: Vec<usize>,
}

impl<T: Scalar> SlotProblem<'_, T> {
    fn layout(&self) -> LinkLayout {
        LinkLayout::from_state(self.state, self.n_subchannels)
    }

    fn bounds(&self) -> Result<Vec<SpeedBounds<T>>> {
        self.state
            .uavs
            .iter()
            .map(|u| trajectory_bounds(u, self.state.slot, self.horizon, self.v_max))
            .collect()
    }

    fn initial_speeds(&self, bounds: &[SpeedBounds<T>]) -> Vec<T> {
        let v0 = self.algo.v0.unwrap_or(self.v_max * T::of(0.5));
        bounds.iter().map(|b| b.clamp(v0)).collect()
    }

    fn search_options(&self) -> SearchOptions<T> {
        let d = SearchOptions::for_v_max(self.v_max);
        SearchOptions {
            step: self.algo.speed_grid_step.unwrap_or(d.step),
            tol: self.algo.speed_refine_tol.unwrap_or(d.tol),
        }
    }

    fn bnb_options(&self) -> BnbOptions {
        BnbOptions {
            node_budget: self.algo.bnb_node_budget,
            trace: self.trace_bnb,
        }
    }

    fn powers_at(&self, layout: &LinkLayout, speeds: &[T]) -> Result<LinkPowers<T>> {
        let pos: Vec<Vec3<T>> = self.state.uavs.iter().zip(speeds).map(|(u, &v)| u.position_after(v)).collect();
        LinkPowers::build(layout, &pos, &self.state.cus, self.state.bs_height, self.channel)
    }

    fn evaluate(&self, layout: &LinkLayout, speeds: &[T], phi: &PhiMatrix, psi: &PsiMatrix) -> Result<Eval<T>> {
        let powers = self.powers_at(layout, speeds)?;
        let report = rates_from_powers(&powers, phi, psi)?;
        Ok(Eval { powers, report })
    }

    /// Exact U2I/CU allocation given the leakage of `psi`.
    fn u2i_step(&self, w: &LinkPowers<T>, psi: &PsiMatrix) -> PhiMatrix {
        let k = self.n_subchannels;
        let leak: Vec<T> = (0..k).map(|c| w.leakage(psi, c)).collect();
        let weights = w
            .row_signal
            .iter()
            .map(|s| (0..k).map(|c| T::shannon(s[c] / (w.noise + leak[c]))).collect())
            .collect();
        let phi = solve_u2i(&AssignmentInstance::new(weights, self.algo.chi_max)).phi;
        if phi.rows() == 0 {
            PhiMatrix::zeros(0, k)
        } else {
            phi
        }
    }

    fn instance(&self, w: &LinkPowers<T>, phi: &PhiMatrix, links: &[usize]) -> U2uInstance<T> {
        U2uInstance::from_powers(w, phi, links, self.algo.r_min, self.algo.chi_max)
    }

    /// Admits links in index order, keeping each one only if the request
    /// procedure still finds a feasible allocation with it included.
    fn servable(&self, w: &LinkPowers<T>, phi: &PhiMatrix, candidates: Vec<usize>) -> Vec<usize> {
        let mut links = Vec::with_capacity(candidates.len());
        for l in candidates {
            links.push(l);
            if lfss(&self.instance(w, phi, &links)).is_err() {
                links.pop();
            }
        }
        links
    }

    /// Best allocation of `links` under `phi`, seeded by the better of the
    /// request procedure and `seed` (when feasible).
    fn u2u_step(&self, w: &LinkPowers<T>, phi: &PhiMatrix, links: &[usize], seed: Option<&PsiMatrix>) -> Option<U2uResult<T>> {
        let inst = self.instance(w, phi, links);
        let restrict = |full: &PsiMatrix| {
            let mut p = PsiMatrix::zeros(links.len(), self.n_subchannels);
            for (i, &l) in links.iter().enumerate() {
                for k in full.row_ones(l) {
                    p.set(i, k, true);
                }
            }
            p
        };
        let from_seed = seed.map(restrict).filter(|p| is_feasible(p, &inst));
        let from_lfss = lfss(&inst).ok();
        let start = match (from_lfss, from_seed) {
            (Some(a), Some(b)) => {
                if u2u_objective(&b, &inst) > u2u_objective(&a, &inst) {
                    b
                } else {
                    a
                }
            }
            (a, b) => a.or(b)?,
        };
        let out = branch_and_bound(&inst, &start, &self.bnb_options()).expect("seed is feasible");
        let mut psi = PsiMatrix::zeros(w.n_u2u(), self.n_subchannels);
        for (i, &l) in links.iter().enumerate() {
            for k in out.psi.row_ones(i) {
                psi.set(l, k, true);
            }
        }
        Some(U2uResult {
            psi,
            nodes: out.nodes,
            exhausted: out.exhausted,
            trace: out.trace,
            _objective: out.objective,
        })
    }

    fn feasible_links(&self, psi: &PsiMatrix, report: &RateReport<T>) -> Vec<usize> {
        (0..psi.rows())
            .filter(|&l| psi.row_sum(l) > 0 && report.u2u_link_rate[l] >= self.algo.r_min)
            .collect()
    }

    /// Speed step with the accept-only-if-not-worse guard: the new speeds
    /// must not lower the objective nor break a link that met `r_min`.
    /// Failing that, only UAVs outside active U2U links move; failing that
    /// too, the speeds are kept.
    fn speed_step(
        &self,
        layout: &LinkLayout,
        bounds: &[SpeedBounds<T>],
        phi: &PhiMatrix,
        psi: &PsiMatrix,
        speeds: &[T],
        cur: Eval<T>,
    ) -> Result<SpeedStep<T>> {
        let problem = SpeedProblem {
            layout,
            powers: &cur.powers,
            phi,
            psi,
            params: self.channel,
            bs_height: self.state.bs_height,
            uavs: &self.state.uavs,
            bounds,
            r_min: self.algo.r_min,
            opts: self.search_options(),
        };
        let dec = problem.solve()?;
        let keep = self.feasible_links(psi, &cur.report);
        let accept = |e: &Eval<T>| {
            e.report.uplink_sum_rate >= cur.report.uplink_sum_rate
                && keep.iter().all(|&l| e.report.u2u_link_rate[l] >= self.algo.r_min)
        };
        let full = self.evaluate(layout, &dec.speeds, phi, psi)?;
        if accept(&full) {
            return Ok(SpeedStep {
                speeds: dec.speeds,
                eval: full,
                distance_violations: dec.violations,
            });
        }
        let mut engaged = vec![false; speeds.len()];
        for l in (0..psi.rows()).filter(|&l| psi.row_sum(l) > 0) {
            engaged[layout.u2u[l].tx] = true;
            engaged[layout.u2u[l].relay] = true;
        }
        let partial: Vec<T> = (0..speeds.len())
            .map(|i| if engaged[i] { speeds[i] } else { dec.speeds[i] })
            .collect();
        if partial != speeds {
            let e = self.evaluate(layout, &partial, phi, psi)?;
            if accept(&e) {
                return Ok(SpeedStep {
                    speeds: partial,
                    eval: e,
                    distance_violations: Vec::new(),
                });
            }
        }
        Ok(SpeedStep {
            speeds: speeds.to_vec(),
            eval: cur,
            distance_violations: Vec::new(),
        })
    }

    #[allow(clippy::too_many_arguments)]
    fn finish(
        &self,
        phi: PhiMatrix,
        psi: PsiMatrix,
        step: SpeedStep<T>,
        served: &[usize],
        iterations: usize,
        converged: bool,
        nodes: u64,
        exhausted: bool,
        trace: Vec<TraceEvent>,
    ) -> SlotDecision<T> {
        let n_u2u = psi.rows();
        let rates = step.eval.report;
        let dropped = (0..n_u2u).filter(|l| !served.contains(l)).collect();
        let rate_violations = (0..n_u2u)
            .filter(|&l| psi.row_sum(l) > 0 && rates.u2u_link_rate[l] < self.algo.r_min)
            .collect();
        SlotDecision {
            objective: rates.uplink_sum_rate,
            phi,
            psi,
            speeds: step.speeds,
            iterations,
            converged,
            rates,
            dropped,
            rate_violations,
            distance_violations: step.distance_violations,
            bnb_nodes: nodes,
            bnb_exhausted: exhausted,
            bnb_trace: trace,
        }
    }

    /// Alternates U2I allocation, U2U allocation and speed optimization
    /// until the objective gain drops to `eps` or `max_iter` is reached.
    ///
    /// Iterations after the first keep the new U2I allocation only when,
    /// with its best U2U allocation, it beats re-optimizing U2U under the
    /// previous U2I allocation; the trace is therefore non-decreasing.
    pub fn run_isasoa(&self) -> Result<(SlotDecision<T>, IterTrace<T>)> {
        let layout = self.layout();
        let bounds = self.bounds()?;
        let (n_rows, n_u2u, k) = (layout.n_rows(), layout.n_u2u(), self.n_subchannels);
        let mut speeds = self.initial_speeds(&bounds);
        let mut phi = PhiMatrix::zeros(n_rows, k);
        let mut psi = PsiMatrix::zeros(n_u2u, k);
        let mut cur = self.evaluate(&layout, &speeds, &phi, &psi)?;
        let mut trace = IterTrace {
            objective: vec![T::zero()],
        };
        let mut served: Option<Vec<usize>> = None;
        let (mut nodes, mut exhausted, mut bnb_trace) = (0u64, false, Vec::new());
        let mut distance_violations = Vec::new();
        let mut converged = false;
        let mut iterations = 0;

        while iterations < self.algo.max_iter {
            iterations += 1;
            let phi_new = self.u2i_step(&cur.powers, &psi);
            let links = served.get_or_insert_with(|| self.servable(&cur.powers, &phi_new, (0..n_u2u).collect()));
            let seed = (iterations > 1).then_some(&psi);
            let cand = self.u2u_step(&cur.powers, &phi_new, links, seed);
            let fallback = if iterations > 1 && phi_new != phi {
                self.u2u_step(&cur.powers, &phi, links, Some(&psi))
            } else {
                None
            };
            let score = |phi: &PhiMatrix, r: &U2uResult<T>| -> Result<T> {
                Ok(rates_from_powers(&cur.powers, phi, &r.psi)?.uplink_sum_rate)
            };
            let (phi_next, res) = match (cand, fallback) {
                (Some(c), Some(f)) => {
                    if score(&phi_new, &c)? >= score(&phi, &f)? {
                        (phi_new, c)
                    } else {
                        (phi.clone(), f)
                    }
                }
                (Some(c), None) => (phi_new, c),
                (None, Some(f)) => (phi.clone(), f),
                (None, None) => {
                    // The previous allocation stays feasible and optimal
                    // among those tried.
                    let r = self
                        .u2u_step(&cur.powers, &phi, links, Some(&psi))
                        .expect("previous allocation is feasible");
                    (phi.clone(), r)
                }
            };
            nodes += res.nodes;
            exhausted |= res.exhausted;
            bnb_trace.extend(res.trace);
            phi = phi_next;
            psi = res.psi;
            let report = rates_from_powers(&cur.powers, &phi, &psi)?;
            cur = Eval {
                powers: cur.powers,
                report,
            };
            let step = self.speed_step(&layout, &bounds, &phi, &psi, &speeds, cur)?;
            speeds = step.speeds;
            cur = step.eval;
            distance_violations = step.distance_violations;
            let f = cur.report.uplink_sum_rate;
            let gain = f - *trace.objective.last().expect("trace nonempty");
            trace.objective.push(f);
            if gain <= self.algo.eps {
                converged = true;
                break;
            }
        }
        let served = served.unwrap_or_default();
        let step = SpeedStep {
            speeds,
            eval: cur,
            distance_violations,
        };
        let d = self.finish(phi, psi, step, &served, iterations, converged, nodes, exhausted, bnb_trace);
        Ok((d, trace))
    }

    /// One-pass greedy baseline: U2I/CU links in decreasing order of their
    /// best rate each take their best free subchannels, then every U2U link
    /// adds the subchannels that raise its own rate most until it reaches
    /// `r_min`; speeds come from the same speed step.
    pub fn run_greedy(&self) -> Result<SlotDecision<T>> {
        let layout = self.layout();
        let bounds = self.bounds()?;
        let k = self.n_subchannels;
        let speeds = self.initial_speeds(&bounds);
        let w = self.powers_at(&layout, &speeds)?;

        let mut phi = PhiMatrix::zeros(layout.n_rows(), k);
        let best_rate = |r: usize| (0..k).map(|c| w.row_signal[r][c]).fold(T::zero(), T::max);
        let mut order: Vec<usize> = (0..layout.n_rows()).collect();
        order.sort_by(|&a, &b| best_rate(b).partial_cmp(&best_rate(a)).unwrap_or(std::cmp::Ordering::Equal).then(a.cmp(&b)));
        let mut taken = vec![false; k];
        for r in order {
            for _ in 0..self.algo.chi_max {
                let pick = (0..k)
                    .filter(|&c| !taken[c])
                    .fold(None, |best: Option<usize>, c| match best {
                        Some(b) if w.row_signal[r][b] >= w.row_signal[r][c] => Some(b),
                        _ => Some(c),
                    });
                let Some(c) = pick else { break };
                taken[c] = true;
                phi.set(r, c, true);
            }
        }

        let mut psi = PsiMatrix::zeros(layout.n_u2u(), k);
        let mut served = Vec::new();
        for l in 0..layout.n_u2u() {
            let rate = |psi: &PsiMatrix| rates_from_powers(&w, &phi, psi).map(|r| r.u2u_link_rate[l]);
            let mut current = T::zero();
            while current < self.algo.r_min && psi.row_sum(l) < self.algo.chi_max {
                let mut best: Option<(usize, T)> = None;
                let options: Vec<usize> = (0..k).filter(|&c| !psi.get(l, c) && !w.relay_blocked(&phi, l, c)).collect();
                for c in options {
                    psi.set(l, c, true);
                    let r = rate(&psi)?;
                    psi.set(l, c, false);
                    if r > current && best.is_none_or(|(_, br)| r > br) {
                        best = Some((c, r));
                    }
                }
                let Some((c, r)) = best else { break };
                psi.set(l, c, true);
                current = r;
            }
            if current >= self.algo.r_min {
                served.push(l);
            } else {
                for c in 0..k {
                    psi.set(l, c, false);
                }
            }
        }
        let report = rates_from_powers(&w, &phi, &psi)?;
        let cur = Eval { powers: w, report };
        let step = self.speed_step(&layout, &bounds, &phi, &psi, &speeds, cur)?;
        Ok(self.finish(phi, psi, step, &served, 1, true, 0, false, Vec::new()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{categorize_forced, generate_scenario, ScenarioConfig};

    fn desk(seed: u64, n_u2u: usize) -> (ScenarioState<f64>, ChannelParams<f64>, AlgorithmParams<f64>, ScenarioConfig) {
        let cfg = ScenarioConfig {
            n_uavs: 10,
            n_subchannels: 6,
            n_cus: 3,
            rng_seed: seed,
            ..ScenarioConfig::default()
        };
        let ch = ChannelParams::default();
        let s = generate_scenario::<f64>(&cfg).unwrap();
        let s = categorize_forced(&s, &ch, n_u2u).unwrap();
        let algo = AlgorithmParams {
            n_u2u,
            ..AlgorithmParams::default()
        };
        (s, ch, algo, cfg)
    }

    fn problem<'a>(
        s: &'a ScenarioState<f64>,
        ch: &'a ChannelParams<f64>,
        algo: &'a AlgorithmParams<f64>,
        cfg: &ScenarioConfig,
    ) -> SlotProblem<'a, f64> {
        SlotProblem {
            state: s,
            channel: ch,
            algo,
            n_subchannels: cfg.n_subchannels,
            horizon: cfg.horizon_t,
            v_max: cfg.v_max,
            trace_bnb: false,
        }
    }

    #[test]
    fn infinite_eps_runs_one_iteration() {
        let (s, ch, mut algo, cfg) = desk(3, 3);
        algo.eps = f64::INFINITY;
        let (d, t) = problem(&s, &ch, &algo, &cfg).run_isasoa().unwrap();
        assert_eq!(d.iterations, 1);
        assert_eq!(t.objective.len(), 2);
        assert!(d.converged);
    }

    #[test]
    fn no_u2u_converges_in_two() {
        let (s, ch, algo, cfg) = desk(4, 0);
        let (d, t) = problem(&s, &ch, &algo, &cfg).run_isasoa().unwrap();
        assert!(d.iterations <= 2, "{t:?}");
        assert!(t.is_non_decreasing(1e-9));
    }

    #[test]
    fn objective_matches_assembled_rates() {
        let (s, ch, algo, cfg) = desk(5, 3);
        let p = problem(&s, &ch, &algo, &cfg);
        for d in [p.run_isasoa().unwrap().0, p.run_greedy().unwrap()] {
            let mut moved = s.clone();
            for (u, &v) in moved.uavs.iter_mut().zip(&d.speeds) {
                u.position = u.position_after(v);
            }
            let r = crate::channel::assemble_rates(&moved, &d.phi, &d.psi, &ch).unwrap();
            assert_eq!(r.uplink_sum_rate, d.objective);
        }
    }

    #[test]
    fn deterministic() {
        let (s, ch, algo, cfg) = desk(6, 3);
        let p = problem(&s, &ch, &algo, &cfg);
        assert_eq!(p.run_isasoa().unwrap().0, p.run_isasoa().unwrap().0);
        assert_eq!(p.run_greedy().unwrap(), p.run_greedy().unwrap());
    }
}
