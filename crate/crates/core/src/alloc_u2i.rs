//! U2I/CU subchannel allocation.
//!
//! The problem is a bipartite b-matching: each Φ row may take up to
//! `chi_max` subchannels, each subchannel serves at most one row, and the
//! objective is linear. Its LP relaxation is a transportation polytope with
//! integral vertices, so an exact combinatorial solver reaches the LP optimum
//! at a 0/1 point. We solve it as a min-cost flow with successive shortest
//! augmenting paths (Bellman-Ford, since arc costs are negative weights).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::PhiMatrix;
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssignmentInstance<T> {
    /// `[row][k]` rate of row `row` on subchannel `k`, bits/s/Hz.
    pub weights: Vec<Vec<T>>,
    pub chi_max: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct U2iSolution<T> {
    pub phi: PhiMatrix,
    pub objective: T,
}

impl<T: Scalar> AssignmentInstance<T> {
    pub fn new(weights: Vec<Vec<T>>, chi_max: usize) -> Self {
        Self { weights, chi_max }
    }

    pub fn rows(&self) -> usize {
        self.weights.len()
    }

    pub fn cols(&self) -> usize {
        self.weights.first().map_or(0, Vec::len)
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.cols();
        if self.weights.iter().any(|r| r.len() != k) {
            return Err(Error::Shape("ragged weight matrix".into()));
        }
        if self.weights.iter().flatten().any(|w| !w.is_finite() || *w < T::zero()) {
            return Err(Error::Contract("weights must be finite and >= 0".into()));
        }
        if self.chi_max == 0 {
            return Err(Error::Contract("chi_max must be >= 1".into()));
        }
        Ok(())
    }
}

struct Arc<T> {
    to: usize,
    cap: usize,
    cost: T,
}

struct FlowGraph<T> {
    arcs: Vec<Arc<T>>,
    out: Vec<Vec<usize>>,
}

impl<T: Scalar> FlowGraph<T> {
    fn new(n: usize) -> Self {
        Self {
            arcs: Vec::new(),
            out: vec![Vec::new(); n],
        }
    }

    /// Adds `from -> to` and its residual twin; returns the forward arc id.
    fn add(&mut self, from: usize, to: usize, cap: usize, cost: T) -> usize {
        let id = self.arcs.len();
        self.arcs.push(Arc { to, cap, cost });
        self.arcs.push(Arc {
            to: from,
            cap: 0,
            cost: -cost,
        });
        self.out[from].push(id);
        self.out[to].push(id + 1);
        id
    }

    /// Bellman-Ford from `src`. Arcs are relaxed in insertion order and only
    /// when they improve a distance by more than `tol`, which makes the chosen
    /// path deterministic and keeps rounding-level cycles out of `pred`.
    fn shortest_paths(&self, src: usize, tol: T) -> (Vec<T>, Vec<Option<usize>>) {
        let n = self.out.len();
        let mut dist = vec![T::infinity(); n];
        let mut pred = vec![None; n];
        dist[src] = T::zero();
        for _ in 0..n {
            let mut changed = false;
            for u in 0..n {
                if dist[u].is_infinite() {
                    continue;
                }
                for &a in &self.out[u] {
                    let arc = &self.arcs[a];
                    if arc.cap == 0 {
                        continue;
                    }
                    let nd = dist[u] + arc.cost;
                    if nd < dist[arc.to] - tol {
                        dist[arc.to] = nd;
                        pred[arc.to] = Some(a);
                        changed = true;
                    }
                }
            }
            if !changed {
                break;
            }
        }
        (dist, pred)
    }
}

/// Maximum-weight Φ for the instance.
///
/// Pairs with non-positive weight are never assigned. Among equal-weight
/// alternatives the augmenting-path scan prefers lower row and subchannel
/// indices, so the output is a deterministic function of the instance.
pub fn solve_u2i<T: Scalar>(inst: &AssignmentInstance<T>) -> U2iSolution<T> {
    let (rows, cols) = (inst.rows(), inst.cols());
    let mut phi = PhiMatrix::zeros(rows, cols);
    if rows == 0 || cols == 0 || inst.chi_max == 0 {
        return U2iSolution {
            objective: objective(&phi, inst),
            phi,
        };
    }
    let src = 0;
    let row_node = |r: usize| 1 + r;
    let col_node = |k: usize| 1 + rows + k;
    let sink = 1 + rows + cols;
    let mut g = FlowGraph::new(sink + 1);
    for r in 0..rows {
        g.add(src, row_node(r), inst.chi_max, T::zero());
    }
    let mut pair_arcs = Vec::new();
    let mut max_w = T::zero();
    for r in 0..rows {
        for k in 0..cols {
            let w = inst.weights[r][k];
            if w > T::zero() {
                max_w = max_w.max(w);
                pair_arcs.push((g.add(row_node(r), col_node(k), 1, -w), r, k));
            }
        }
    }
    for k in 0..cols {
        g.add(col_node(k), sink, 1, T::zero());
    }
    // Differences at rounding level are treated as ties.
    let n_nodes = sink + 1;
    let tol = T::epsilon() * T::of(16.0 * n_nodes as f64) * max_w;
    'augment: loop {
        let (dist, pred) = g.shortest_paths(src, tol);
        if !(dist[sink] < -tol) {
            break;
        }
        let mut path = Vec::new();
        let mut v = sink;
        while v != src {
            if path.len() > n_nodes {
                break 'augment;
            }
            let a = pred[v].expect("path to sink");
            path.push(a);
            v = g.arcs[a ^ 1].to;
        }
        for a in path {
            g.arcs[a].cap -= 1;
            g.arcs[a ^ 1].cap += 1;
        }
    }
    for (a, r, k) in pair_arcs {
        if g.arcs[a].cap == 0 {
            phi.set(r, k, true);
        }
    }
    U2iSolution {
        objective: objective(&phi, inst),
        phi,
    }
}

fn objective<T: Scalar>(phi: &PhiMatrix, inst: &AssignmentInstance<T>) -> T {
    let mut total = T::zero();
    for r in 0..phi.rows() {
        for k in 0..phi.cols() {
            if phi.get(r, k) {
                total += inst.weights[r][k];
            }
        }
    }
    total
}

/// Checks `phi` against the instance and returns its objective.
pub fn verify_phi<T: Scalar>(phi: &PhiMatrix, inst: &AssignmentInstance<T>) -> Result<T> {
    if phi.rows() != inst.rows() || (phi.rows() > 0 && phi.cols() != inst.cols()) {
        return Err(Error::Shape(format!(
            "phi is {}x{}, instance is {}x{}",
            phi.rows(),
            phi.cols(),
            inst.rows(),
            inst.cols()
        )));
    }
    for k in 0..phi.cols() {
        let n = phi.col_sum(k);
        if n > 1 {
            return Err(Error::ConstraintViolation {
                constraint: "subchannel_exclusive",
                detail: format!("subchannel {k} assigned to {n} links"),
            });
        }
    }
    for r in 0..phi.rows() {
        let n = phi.row_sum(r);
        if n > inst.chi_max {
            return Err(Error::ConstraintViolation {
                constraint: "row_chi_max",
                detail: format!("link {r} holds {n} > {} subchannels", inst.chi_max),
            });
        }
    }
    Ok(objective(phi, inst))
}
