//! U2U subchannel allocation.
//!
//! With Φ and the UAV positions fixed, the uplink sum-rate depends on Ψ only
//! through the leakage of U2U transmitters at the BS, while each U2U link
//! must reach `r_min` under U2I, CU and U2U interference at its relay. The
//! problem is a non-convex 0/1 program; we seed an incumbent with a greedy
//! request procedure ([`lfss`]) and search the binary tree depth-first with
//! objective/constraint bounds and variable fixation ([`branch_and_bound`]).

use serde::{Deserialize, Serialize};

use crate::channel::LinkPowers;
use crate::error::{Error, Result};
use crate::matrix::{PhiMatrix, PsiMatrix};
use crate::scalar::Scalar;

/// Data of one U2U allocation sub-problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct U2uInstance<T> {
    pub n_subchannels: usize,
    pub r_min: T,
    pub chi_max: usize,
    pub noise: T,
    /// `[l][k]` received power of link `l` at its relay.
    pub signal: Vec<Vec<T>>,
    /// `[l][m][k]` power from U2U transmitter `m` at the relay of `l`.
    pub cross: Vec<Vec<Vec<T>>>,
    /// `[l][k]` noise plus co-channel U2I/CU interference at the relay of `l`.
    pub fixed_interference: Vec<Vec<T>>,
    /// `[l][k]` set when the relay of `l` itself transmits U2I on `k`.
    #[serde(default)]
    pub blocked: Vec<Vec<bool>>,
    /// `[k]` BS-received power of the U2I/CU link holding `k`, if any.
    pub channel_signal: Vec<Option<T>>,
    /// `[l][k]` power of U2U transmitter `l` at the BS.
    pub leak: Vec<Vec<T>>,
}

impl<T: Scalar> U2uInstance<T> {
    /// Sub-problem for the U2U links `links` (indices into the powers' U2U
    /// list) under the allocation `phi`.
    pub fn from_powers(w: &LinkPowers<T>, phi: &PhiMatrix, links: &[usize], r_min: T, chi_max: usize) -> Self {
        let n_k = w.n_subchannels();
        let channel_signal = (0..n_k)
            .map(|k| phi.col_ones(k).next().map(|r| w.row_signal[r][k]))
            .collect();
        let fixed_interference = links
            .iter()
            .map(|&l| {
                (0..n_k)
                    .map(|k| {
                        let a = w.fixed_u2u_interference(phi, l, k);
                        if a.is_infinite() {
                            w.noise
                        } else {
                            a
                        }
                    })
                    .collect()
            })
            .collect();
        Self {
            n_subchannels: n_k,
            r_min,
            chi_max,
            noise: w.noise,
            signal: links.iter().map(|&l| w.u2u_signal[l].clone()).collect(),
            cross: links
                .iter()
                .map(|&l| links.iter().map(|&m| w.u2u_cross[l][m].clone()).collect())
                .collect(),
            fixed_interference,
            blocked: links
                .iter()
                .map(|&l| (0..n_k).map(|k| w.relay_blocked(phi, l, k)).collect())
                .collect(),
            channel_signal,
            leak: links.iter().map(|&l| w.u2u_leak[l].clone()).collect(),
        }
    }

    pub fn n_links(&self) -> usize {
        self.signal.len()
    }

    pub fn validate(&self) -> Result<()> {
        let (n, k) = (self.n_links(), self.n_subchannels);
        let ok2 = |m: &Vec<Vec<T>>| m.len() == n && m.iter().all(|r| r.len() == k);
        if !ok2(&self.signal) || !ok2(&self.fixed_interference) || !ok2(&self.leak) {
            return Err(Error::Shape("per-link matrices must be n_links x n_subchannels".into()));
        }
        if self.cross.len() != n || self.cross.iter().any(|c| !ok2(c)) {
            return Err(Error::Shape("cross must be n_links x n_links x n_subchannels".into()));
        }
        if self.channel_signal.len() != k {
            return Err(Error::Shape("channel_signal must have n_subchannels entries".into()));
        }
        if !self.blocked.is_empty() && (self.blocked.len() != n || self.blocked.iter().any(|r| r.len() != k)) {
            return Err(Error::Shape("blocked must be empty or n_links x n_subchannels".into()));
        }
        let powers = self
            .signal
            .iter()
            .chain(&self.fixed_interference)
            .chain(&self.leak)
            .flatten()
            .chain(self.cross.iter().flatten().flatten())
            .chain(self.channel_signal.iter().flatten());
        for v in powers.chain([&self.noise]) {
            if !v.is_finite() || *v < T::zero() {
                return Err(Error::Contract("powers must be finite and >= 0".into()));
            }
        }
        if !(self.r_min >= T::zero()) {
            return Err(Error::Contract("r_min must be >= 0".into()));
        }
        Ok(())
    }

    #[inline]
    fn is_blocked(&self, l: usize, k: usize) -> bool {
        self.blocked.get(l).is_some_and(|r| r[k])
    }

    /// Rate of link `l` on `k` under extra U2U interference `u2u`.
    #[inline]
    pub fn rate_term(&self, l: usize, k: usize, u2u: T) -> T {
        if self.is_blocked(l, k) {
            return T::zero();
        }
        T::shannon(self.signal[l][k] / (self.fixed_interference[l][k] + u2u))
    }

    /// Uplink rate carried on `k` under U2U leakage `leak`.
    #[inline]
    pub fn channel_term(&self, k: usize, leak: T) -> T {
        match self.channel_signal[k] {
            Some(s) => T::shannon(s / (self.noise + leak)),
            None => T::zero(),
        }
    }

    fn empty_psi(&self) -> PsiMatrix {
        PsiMatrix::zeros(self.n_links(), self.n_subchannels)
    }

    fn check_psi(&self, psi: &PsiMatrix) -> Result<()> {
        if psi.rows() != self.n_links() || (psi.rows() > 0 && psi.cols() != self.n_subchannels) {
            return Err(Error::Shape(format!(
                "psi is {}x{}, instance is {}x{}",
                psi.rows(),
                psi.cols(),
                self.n_links(),
                self.n_subchannels
            )));
        }
        Ok(())
    }
}

/// Uplink sum-rate for `psi` with Φ fixed.
pub fn u2u_objective<T: Scalar>(psi: &PsiMatrix, inst: &U2uInstance<T>) -> T {
    let mut total = T::zero();
    for k in 0..inst.n_subchannels {
        let mut leak = T::zero();
        for l in psi.col_ones(k) {
            leak += inst.leak[l][k];
        }
        total += inst.channel_term(k, leak);
    }
    total
}

/// Aggregate rate of link `l` under `psi`.
pub fn link_rate<T: Scalar>(psi: &PsiMatrix, inst: &U2uInstance<T>, l: usize) -> T {
    let mut total = T::zero();
    for k in psi.row_ones(l) {
        let mut u2u = T::zero();
        for m in psi.col_ones(k) {
            if m != l {
                u2u += inst.cross[l][m][k];
            }
        }
        total += inst.rate_term(l, k, u2u);
    }
    total
}

pub fn link_rates<T: Scalar>(psi: &PsiMatrix, inst: &U2uInstance<T>) -> Vec<T> {
    (0..inst.n_links()).map(|l| link_rate(psi, inst, l)).collect()
}

/// Whether `psi` meets the minimum-rate and per-link subchannel-count
/// constraints.
pub fn is_feasible<T: Scalar>(psi: &PsiMatrix, inst: &U2uInstance<T>) -> bool {
    (0..inst.n_links()).all(|l| psi.row_sum(l) <= inst.chi_max && link_rate(psi, inst, l) >= inst.r_min)
}

/// Greedy request procedure could not satisfy `link`.
#[derive(Debug, Clone, PartialEq)]
pub struct LfssInfeasible {
    pub link: usize,
    pub partial: PsiMatrix,
}

/// Initial feasible allocation.
///
/// Every link ranks subchannels by its rate under U2I/CU interference only,
/// takes its first choice, and then, while some link (lowest index first)
/// misses `r_min`, that link requests its next preferred subchannel. A link
/// never holds more than `chi_max` subchannels.
pub fn lfss<T: Scalar>(inst: &U2uInstance<T>) -> std::result::Result<PsiMatrix, LfssInfeasible> {
    let (n, n_k) = (inst.n_links(), inst.n_subchannels);
    let mut psi = inst.empty_psi();
    let prefs: Vec<Vec<usize>> = (0..n)
        .map(|l| {
            let mut ks: Vec<usize> = (0..n_k).filter(|&k| inst.rate_term(l, k, T::zero()) > T::zero()).collect();
            ks.sort_by(|&a, &b| {
                let (ra, rb) = (inst.rate_term(l, a, T::zero()), inst.rate_term(l, b, T::zero()));
                rb.partial_cmp(&ra).unwrap_or(std::cmp::Ordering::Equal).then(a.cmp(&b))
            });
            ks
        })
        .collect();
    let mut next = vec![0usize; n];
    for l in 0..n {
        if inst.chi_max > 0 {
            if let Some(&k) = prefs[l].first() {
                psi.set(l, k, true);
                next[l] = 1;
            }
        }
    }
    loop {
        let Some(l) = (0..n).find(|&l| link_rate(&psi, inst, l) < inst.r_min) else {
            return Ok(psi);
        };
        if psi.row_sum(l) >= inst.chi_max || next[l] >= prefs[l].len() {
            return Err(LfssInfeasible { link: l, partial: psi });
        }
        psi.set(l, prefs[l][next[l]], true);
        next[l] += 1;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum VarState {
    Free,
    Zero,
    One,
}

/// A node of the search tree: the fixation state of every `ψ[l][k]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BnbNode {
    pub vars: Vec<VarState>,
    pub depth: usize,
    pub id: u64,
    pub parent: Option<u64>,
    n_k: usize,
}

impl BnbNode {
    pub fn root<T: Scalar>(inst: &U2uInstance<T>) -> Self {
        let n_k = inst.n_subchannels;
        let vars = (0..inst.n_links() * n_k)
            .map(|i| {
                if inst.is_blocked(i / n_k, i % n_k) {
                    VarState::Zero
                } else {
                    VarState::Free
                }
            })
            .collect();
        Self {
            vars,
            depth: 0,
            id: 0,
            parent: None,
            n_k,
        }
    }

    #[inline]
    pub fn get(&self, l: usize, k: usize) -> VarState {
        self.vars[l * self.n_k + k]
    }

    #[inline]
    pub fn set(&mut self, l: usize, k: usize, v: VarState) {
        self.vars[l * self.n_k + k] = v;
    }

    pub fn is_complete(&self) -> bool {
        self.vars.iter().all(|&v| v != VarState::Free)
    }

    /// Ψ with every fixed-1 variable set and the rest 0.
    pub fn fixed_ones(&self, n_links: usize) -> PsiMatrix {
        let mut psi = PsiMatrix::zeros(n_links, self.n_k);
        for l in 0..n_links {
            for k in 0..self.n_k {
                if self.get(l, k) == VarState::One {
                    psi.set(l, k, true);
                }
            }
        }
        psi
    }
}

/// Bound quantities of a node, all evaluated with only fixed-1 variables
/// active as interferers.
struct NodeBounds<T> {
    /// `[k]` leakage of fixed-1 variables at the BS.
    leak: Vec<T>,
    /// `[l][k]` interference at relay of `l` from other links' fixed-1 variables.
    u2u: Vec<Vec<T>>,
    objective: T,
    link: Vec<T>,
}

fn node_bounds<T: Scalar>(inst: &U2uInstance<T>, node: &BnbNode) -> NodeBounds<T> {
    let (n, n_k) = (inst.n_links(), inst.n_subchannels);
    let mut leak = vec![T::zero(); n_k];
    let mut u2u = vec![vec![T::zero(); n_k]; n];
    for (k, lk) in leak.iter_mut().enumerate() {
        for m in 0..n {
            if node.get(m, k) == VarState::One {
                *lk += inst.leak[m][k];
            }
        }
        for (l, row) in u2u.iter_mut().enumerate() {
            for m in 0..n {
                if m != l && node.get(m, k) == VarState::One {
                    row[k] += inst.cross[l][m][k];
                }
            }
        }
    }
    let mut objective = T::zero();
    for (k, &lk) in leak.iter().enumerate() {
        objective += inst.channel_term(k, lk);
    }
    let link = (0..n)
        .map(|l| {
            let mut r = T::zero();
            for (k, &i) in u2u[l].iter().enumerate() {
                if node.get(l, k) != VarState::Zero {
                    r += inst.rate_term(l, k, i);
                }
            }
            r
        })
        .collect();
    NodeBounds {
        leak,
        u2u,
        objective,
        link,
    }
}

/// Upper bound of the uplink sum-rate over all completions of `node`:
/// the interference of unfixed variables is ignored.
pub fn objective_upper_bound<T: Scalar>(inst: &U2uInstance<T>, node: &BnbNode) -> T {
    node_bounds(inst, node).objective
}

/// Upper bound of link `l`'s rate over all completions of `node`: its own
/// unfixed variables set to 1, other links' unfixed variables set to 0.
pub fn constraint_upper_bound<T: Scalar>(inst: &U2uInstance<T>, node: &BnbNode, l: usize) -> T {
    node_bounds(inst, node).link[l]
}

/// Result of the variable-fixation step at a node.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Fixation {
    /// Some variable would have to be both 0 and 1.
    Contradiction { link: usize, subchannel: usize },
    /// Variables that can be fixed, `(link, subchannel, value)`.
    Fix(Vec<(usize, usize, bool)>),
}

fn fixations_with<T: Scalar>(inst: &U2uInstance<T>, node: &BnbNode, b: &NodeBounds<T>, f_lb: T) -> Fixation {
    let (n, n_k) = (inst.n_links(), inst.n_subchannels);
    let mut fixed = Vec::new();
    for l in 0..n {
        for k in 0..n_k {
            if node.get(l, k) != VarState::Free {
                continue;
            }
            // Objective fixation. Fixing to 0 leaves the bound unchanged
            // (p0 = 0), fixing to 1 adds this variable's leakage.
            let p0 = T::zero();
            let p1 = inst.channel_term(k, b.leak[k]) - inst.channel_term(k, b.leak[k] + inst.leak[l][k]);
            let to_one_obj = b.objective - p0 <= f_lb;
            let to_zero_obj = b.objective - p1 <= f_lb;
            // Constraint fixation: dropping this subchannel would leave the
            // link below r_min.
            let q0 = inst.rate_term(l, k, b.u2u[l][k]);
            let to_one_con = b.link[l] - q0 < inst.r_min;
            let one = to_one_obj || to_one_con;
            let zero = to_zero_obj;
            match (one, zero) {
                (true, true) => return Fixation::Contradiction { link: l, subchannel: k },
                (true, false) => fixed.push((l, k, true)),
                (false, true) => fixed.push((l, k, false)),
                (false, false) => {}
            }
        }
    }
    Fixation::Fix(fixed)
}

/// Variable fixation at `node` against incumbent value `f_lb`.
pub fn fixations<T: Scalar>(inst: &U2uInstance<T>, node: &BnbNode, f_lb: T) -> Fixation {
    fixations_with(inst, node, &node_bounds(inst, node), f_lb)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BnbOptions {
    /// Maximum number of processed nodes; `None` searches exhaustively.
    pub node_budget: Option<u64>,
    /// Record a search trace.
    pub trace: bool,
}

impl Default for BnbOptions {
    fn default() -> Self {
        Self {
            node_budget: Some(1_000_000),
            trace: false,
        }
    }
}

impl BnbOptions {
    pub fn unbounded() -> Self {
        Self {
            node_budget: None,
            trace: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum TraceKind {
    ObjectiveBound,
    ConstraintBound { link: usize },
    ChiMax { link: usize },
    SubtreeOptimal,
    Infeasible,
    Contradiction { link: usize, subchannel: usize },
    Fixed { count: usize },
    Branch { link: usize, subchannel: usize },
    Incumbent,
    BudgetExhausted,
}

/// One line of the search trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub node: u64,
    pub depth: usize,
    #[serde(flatten)]
    pub kind: TraceKind,
    pub upper_bound: f64,
    pub incumbent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BnbOutcome<T> {
    pub psi: PsiMatrix,
    pub objective: T,
    pub nodes: u64,
    /// The node budget ran out before the tree was exhausted.
    pub exhausted: bool,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub trace: Vec<TraceEvent>,
}

struct Search<'a, T> {
    inst: &'a U2uInstance<T>,
    best: PsiMatrix,
    f_lb: T,
    trace: Option<Vec<TraceEvent>>,
}

impl<T: Scalar> Search<'_, T> {
    fn log(&mut self, node: &BnbNode, kind: TraceKind, ub: T) {
        if let Some(t) = self.trace.as_mut() {
            t.push(TraceEvent {
                node: node.id,
                depth: node.depth,
                kind,
                upper_bound: ub.to_f64_lossy(),
                incumbent: self.f_lb.to_f64_lossy(),
            });
        }
    }

    /// Applies the implied χ_max fixings. Returns the link that already
    /// holds more than χ_max fixed-1 variables, if any.
    fn chi_max_pass(&self, node: &mut BnbNode) -> Option<usize> {
        let n_k = self.inst.n_subchannels;
        for l in 0..self.inst.n_links() {
            let ones = (0..n_k).filter(|&k| node.get(l, k) == VarState::One).count();
            if ones > self.inst.chi_max {
                return Some(l);
            }
            if ones == self.inst.chi_max {
                for k in 0..n_k {
                    if node.get(l, k) == VarState::Free {
                        node.set(l, k, VarState::Zero);
                    }
                }
            }
        }
        None
    }
}

/// Exact (unbounded budget) or anytime search for the best feasible Ψ.
///
/// `seed` must be feasible; its objective is the initial incumbent. The
/// result is never worse than the seed.
pub fn branch_and_bound<T: Scalar>(inst: &U2uInstance<T>, seed: &PsiMatrix, opts: &BnbOptions) -> Result<BnbOutcome<T>> {
    inst.check_psi(seed)?;
    if !is_feasible(seed, inst) {
        return Err(Error::Contract("branch-and-bound seed is infeasible".into()));
    }
    let mut s = Search {
        inst,
        best: seed.clone(),
        f_lb: u2u_objective(seed, inst),
        trace: opts.trace.then(Vec::new),
    };
    let n = inst.n_links();
    let mut nodes = 0u64;
    let mut next_id = 1u64;
    let mut exhausted = false;
    let mut stack = vec![BnbNode::root(inst)];

    while let Some(mut node) = stack.pop() {
        if opts.node_budget.is_some_and(|b| nodes >= b) {
            exhausted = true;
            s.log(&node, TraceKind::BudgetExhausted, T::nan());
            break;
        }
        nodes += 1;
        // Bound calculation and fixation repeat on the same node whenever
        // fixation succeeds; that sequence is the chain of single children.
        loop {
            if let Some(l) = s.chi_max_pass(&mut node) {
                s.log(&node, TraceKind::ChiMax { link: l }, T::nan());
                break;
            }
            let b = node_bounds(inst, &node);
            if b.objective < s.f_lb {
                s.log(&node, TraceKind::ObjectiveBound, b.objective);
                break;
            }
            if let Some(l) = (0..n).find(|&l| b.link[l] < inst.r_min) {
                s.log(&node, TraceKind::ConstraintBound { link: l }, b.objective);
                break;
            }
            // The fixed-1 completion attains the objective bound; if it is
            // feasible nothing below this node can beat it.
            let cand = node.fixed_ones(n);
            if is_feasible(&cand, inst) {
                let f = u2u_objective(&cand, inst);
                if f > s.f_lb {
                    s.f_lb = f;
                    s.best = cand;
                    s.log(&node, TraceKind::Incumbent, b.objective);
                }
                s.log(&node, TraceKind::SubtreeOptimal, b.objective);
                break;
            }
            if node.is_complete() {
                s.log(&node, TraceKind::Infeasible, b.objective);
                break;
            }
            match fixations_with(inst, &node, &b, s.f_lb) {
                Fixation::Contradiction { link, subchannel } => {
                    s.log(&node, TraceKind::Contradiction { link, subchannel }, b.objective);
                    break;
                }
                Fixation::Fix(f) if !f.is_empty() => {
                    s.log(&node, TraceKind::Fixed { count: f.len() }, b.objective);
                    for (l, k, v) in f {
                        node.set(l, k, if v { VarState::One } else { VarState::Zero });
                    }
                    node.parent = Some(node.id);
                    node.id = next_id;
                    next_id += 1;
                    node.depth += 1;
                }
                Fixation::Fix(_) => {
                    let (l, k) = branch_variable(inst, &node, &b);
                    s.log(&node, TraceKind::Branch { link: l, subchannel: k }, b.objective);
                    for v in [VarState::Zero, VarState::One] {
                        let mut child = node.clone();
                        child.set(l, k, v);
                        child.parent = Some(node.id);
                        child.id = next_id;
                        child.depth = node.depth + 1;
                        next_id += 1;
                        stack.push(child);
                    }
                    break;
                }
            }
        }
    }
    Ok(BnbOutcome {
        objective: s.f_lb,
        psi: s.best,
        nodes,
        exhausted,
        trace: s.trace.unwrap_or_default(),
    })
}

/// Free variable with the largest single-subchannel U2U rate; ties go to
/// the lowest `(link, subchannel)`.
fn branch_variable<T: Scalar>(inst: &U2uInstance<T>, node: &BnbNode, b: &NodeBounds<T>) -> (usize, usize) {
    let mut best: Option<((usize, usize), T)> = None;
    for l in 0..inst.n_links() {
        for k in 0..inst.n_subchannels {
            if node.get(l, k) != VarState::Free {
                continue;
            }
            let r = inst.rate_term(l, k, b.u2u[l][k]);
            if best.is_none_or(|(_, br)| r > br) {
                best = Some(((l, k), r));
            }
        }
    }
    best.expect("node has a free variable").0
}

/// LFSS followed by branch-and-bound.
pub fn solve_u2u<T: Scalar>(inst: &U2uInstance<T>, opts: &BnbOptions) -> std::result::Result<BnbOutcome<T>, LfssInfeasible> {
    let seed = lfss(inst)?;
    Ok(branch_and_bound(inst, &seed, opts).expect("LFSS output is feasible"))
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Two links, `k` subchannels, symmetric geometry.
    fn toy(k: usize, r_min: f64) -> U2uInstance<f64> {
        let noise = 1e-13;
        U2uInstance {
            n_subchannels: k,
            r_min,
            chi_max: 2,
            noise,
            signal: vec![vec![1e-9; k], vec![8e-10; k]],
            cross: vec![vec![vec![0.0; k], vec![2e-11; k]], vec![vec![3e-11; k], vec![0.0; k]]],
            fixed_interference: vec![(0..k).map(|i| noise + 1e-12 * i as f64).collect(), vec![noise * 2.0; k]],
            blocked: vec![],
            channel_signal: (0..k).map(|i| Some(1e-10 * (i + 1) as f64)).collect(),
            leak: vec![vec![1e-13; k], vec![3e-13; k]],
        }
    }

    #[test]
    fn zero_threshold_first_choice_feasible() {
        let inst = toy(3, 0.0);
        let psi = lfss(&inst).unwrap();
        assert_eq!(psi.count_ones(), 2);
        assert!(is_feasible(&psi, &inst));
        // with no rate requirement the optimum drops every U2U link
        let out = branch_and_bound(&inst, &psi, &BnbOptions::unbounded()).unwrap();
        assert_eq!(out.psi.count_ones(), 0);
        assert_eq!(out.objective, u2u_objective(&PsiMatrix::zeros(2, 3), &inst));
    }

    #[test]
    fn strong_single_link_takes_best_channel() {
        let inst = U2uInstance {
            n_subchannels: 3,
            r_min: 5.0,
            chi_max: 2,
            noise: 1e-13,
            signal: vec![vec![1.0; 3]],
            cross: vec![vec![vec![0.0; 3]]],
            fixed_interference: vec![vec![2e-13, 1e-13, 3e-13]],
            blocked: vec![],
            channel_signal: vec![Some(1e-10); 3],
            leak: vec![vec![1e-14; 3]],
        };
        let psi = lfss(&inst).unwrap();
        assert_eq!(psi.to_rows(), vec![vec![0, 1, 0]]);
    }

    #[test]
    fn blocked_channels_never_used() {
        let mut inst = toy(2, 1.0);
        inst.blocked = vec![vec![true, false], vec![false, false]];
        let out = solve_u2u(&inst, &BnbOptions::unbounded()).unwrap();
        assert!(!out.psi.get(0, 0));
    }

    #[test]
    fn infeasible_seed_rejected() {
        let inst = toy(2, 100.0);
        assert!(lfss(&inst).is_err());
        let err = branch_and_bound(&inst, &PsiMatrix::zeros(2, 2), &BnbOptions::unbounded()).unwrap_err();
        assert!(matches!(err, Error::Contract(_)));
    }

    #[test]
    fn empty_instance() {
        let inst = U2uInstance::<f64> {
            n_subchannels: 2,
            r_min: 10.0,
            chi_max: 2,
            noise: 1e-13,
            signal: vec![],
            cross: vec![],
            fixed_interference: vec![],
            blocked: vec![],
            channel_signal: vec![Some(1e-11), None],
            leak: vec![],
        };
        let out = solve_u2u(&inst, &BnbOptions::unbounded()).unwrap();
        assert_eq!(out.psi.rows(), 0);
        assert!((out.objective - (1.0f64 + 100.0).log2()).abs() < 1e-12);
    }

    #[test]
    fn adding_underlay_lowers_channel_rate() {
        let inst = toy(3, 0.0);
        let base = u2u_objective(&PsiMatrix::zeros(2, 3), &inst);
        for l in 0..2 {
            for k in 0..3 {
                let mut psi = PsiMatrix::zeros(2, 3);
                psi.set(l, k, true);
                assert!(u2u_objective(&psi, &inst) < base);
            }
        }
    }

    #[test]
    fn budget_is_anytime() {
        let inst = toy(4, 8.0);
        let seed = lfss(&inst).unwrap();
        let f_seed = u2u_objective(&seed, &inst);
        let out = branch_and_bound(&inst, &seed, &BnbOptions { node_budget: Some(1), trace: true }).unwrap();
        assert!(out.objective >= f_seed);
        assert!(is_feasible(&out.psi, &inst));
        assert!(!out.trace.is_empty());
    }

    #[test]
    fn trace_serializes_as_flat_json() {
        let inst = toy(2, 8.0);
        let out = solve_u2u(&inst, &BnbOptions { node_budget: None, trace: true }).unwrap();
        let line = serde_json::to_string(&out.trace[0]).unwrap();
        assert!(line.contains("\"event\":"), "{line}");
    }
}
