//! Per-slot UAV speed optimization.
//!
//! With Φ and Ψ fixed, each UAV that is neither a relay nor a U2U
//! transmitter of an active link picks its speed alone. A relay and the U2U
//! transmitters feeding it are optimized jointly, since each link's rate
//! requirement becomes an end-of-slot distance bound. Rates are evaluated at
//! the end-of-slot positions with the remaining interference frozen.

use serde::{Deserialize, Serialize};

use crate::channel::{u2i_received_power_w, ChannelParams, LinkLayout, LinkPowers};
use crate::error::{Error, Result};
use crate::matrix::{PhiMatrix, PsiMatrix};
use crate::scalar::Scalar;
use crate::scenario::{distance_uav_uav, UavState, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpeedBounds<T> {
    pub lower: T,
    pub upper: T,
}

impl<T: Scalar> SpeedBounds<T> {
    pub fn clamp(&self, v: T) -> T {
        v.max(self.lower).min(self.upper)
    }

    pub fn contains(&self, v: T) -> bool {
        v >= self.lower && v <= self.upper
    }
}

/// Speeds of one slot, indexed by UAV id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeedDecision<T> {
    pub speeds: Vec<T>,
    /// U2U links (indices into the layout) whose distance bound could not be met.
    pub violations: Vec<usize>,
}

/// Speed range that still lets the UAV finish its trajectory by the horizon.
pub fn feasible_bounds<T: Scalar>(u: &UavState<T>, t: usize, horizon: usize, v_max: T) -> Result<SpeedBounds<T>> {
    if t >= horizon {
        return Err(Error::domain(format!("slot {t} is past the horizon {horizon}")));
    }
    let rem = u.remaining();
    let reachable = v_max * T::of((horizon - t) as f64);
    if rem > reachable + T::of(1e-9) {
        return Err(Error::HorizonInfeasible {
            uav: u.id,
            slot: t,
            remaining: rem.to_f64_lossy(),
            reachable: reachable.to_f64_lossy(),
        });
    }
    let lower = (rem - v_max * T::of((horizon - t - 1) as f64)).max(T::zero()).min(v_max);
    Ok(SpeedBounds { lower, upper: v_max })
}

/// [`feasible_bounds`] restricted to the rest of the trajectory: the UAV
/// never flies past its end and hovers once it gets there.
pub fn trajectory_bounds<T: Scalar>(u: &UavState<T>, t: usize, horizon: usize, v_max: T) -> Result<SpeedBounds<T>> {
    let b = feasible_bounds(u, t, horizon, v_max)?;
    let upper = b.upper.min(u.remaining().max(T::zero()));
    Ok(SpeedBounds { lower: b.lower.min(upper), upper })
}

/// Largest tx-relay distance at which a link still reaches `r_min`, with
/// the interference-plus-noise on each assigned subchannel frozen.
///
/// `coeff` is the received power at unit distance, so the rate on channel
/// `k` is `log2(1 + coeff d^-alpha / interference[k])`.
pub fn u2u_max_distance<T: Scalar>(link: usize, interference: &[T], r_min: T, coeff: T, alpha: T) -> Result<T> {
    if interference.is_empty() {
        return Err(Error::NoChannel { link });
    }
    if r_min <= T::zero() {
        return Ok(T::infinity());
    }
    let single = |i: T, r: T| (coeff / (i * (r.exp2() - T::one()))).powf(alpha.recip());
    if interference.len() == 1 {
        return Ok(single(interference[0], r_min));
    }
    let rate = |d: T| -> T {
        let s = coeff * d.powf(-alpha);
        let mut total = T::zero();
        for &i in interference {
            total += T::shannon(s / i);
        }
        total
    };
    let i_min = interference.iter().copied().fold(T::infinity(), T::min);
    let n = T::of(interference.len() as f64);
    let mut lo = interference.iter().map(|&i| single(i, r_min)).fold(T::zero(), T::max);
    let mut hi = single(i_min, r_min / n);
    if !(hi > lo) {
        return Ok(lo);
    }
    for _ in 0..200 {
        let mid = (lo * hi).sqrt();
        if !(mid > lo && mid < hi) {
            break;
        }
        if rate(mid) >= r_min {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}

/// Grid resolution and refinement tolerance of the 1-D searches.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchOptions<T> {
    pub step: T,
    pub tol: T,
}

impl<T: Scalar> SearchOptions<T> {
    pub fn for_v_max(v_max: T) -> Self {
        Self {
            step: v_max / T::of(100.0),
            tol: v_max * T::of(1e-9).max(T::epsilon() * T::of(64.0)),
        }
    }
}

fn grid<T: Scalar>(lo: T, hi: T, step: T) -> impl Iterator<Item = T> {
    let n = if hi > lo && step > T::zero() {
        ((hi - lo) / step).ceil().to_usize().unwrap_or(0)
    } else {
        0
    };
    (0..=n).map(move |i| if i == n { hi.max(lo) } else { lo + step * T::of(i as f64) })
}

/// Maximizes `f` over `[lo, hi]`: grid search, then golden-section
/// refinement around the best grid point. Ties go to the smallest argument.
pub fn maximize_1d<T: Scalar>(f: impl Fn(T) -> T, lo: T, hi: T, opts: SearchOptions<T>) -> (T, T) {
    let mut best = (lo, f(lo));
    for x in grid(lo, hi, opts.step).skip(1) {
        let y = f(x);
        if y > best.1 {
            best = (x, y);
        }
    }
    if hi <= lo {
        return best;
    }
    let (mut a, mut b) = ((best.0 - opts.step).max(lo), (best.0 + opts.step).min(hi));
    let g = T::of(0.5 * (5f64.sqrt() - 1.0));
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    // The golden section shrinks by 0.618 per step; 200 steps cover any
    // finite bracket even when `tol` is below the scalar's resolution.
    for _ in 0..200 {
        if b - a <= opts.tol {
            break;
        }
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    let x = T::of(0.5) * (a + b);
    let y = f(x);
    if y > best.1 {
        best = (x, y);
    }
    best
}

/// Speed interval of a transmitter keeping it within `d_max` of the
/// relay's end-of-slot position `q`, intersected with `b`.
pub fn distance_interval<T: Scalar>(u: &UavState<T>, q: Vec3<T>, d_max: T, b: SpeedBounds<T>) -> Option<SpeedBounds<T>> {
    if d_max.is_infinite() {
        return Some(b);
    }
    let a = u.position - q;
    let w = u.direction;
    let ww = w.x * w.x + w.y * w.y + w.z * w.z;
    let aw = a.x * w.x + a.y * w.y + a.z * w.z;
    let c = a.x * a.x + a.y * a.y + a.z * a.z - d_max * d_max;
    if ww <= T::zero() {
        return (c <= T::zero()).then_some(b);
    }
    let disc = aw * aw - ww * c;
    if disc < T::zero() {
        return None;
    }
    let r = disc.sqrt();
    let lower = ((-aw - r) / ww).max(b.lower);
    let upper = ((-aw + r) / ww).min(b.upper);
    (lower <= upper).then_some(SpeedBounds { lower, upper })
}

/// A U2U transmitter attached to a relay.
pub struct GroupMember<'a, T> {
    pub uav: &'a UavState<T>,
    pub bounds: SpeedBounds<T>,
    pub d_max: T,
    pub objective: &'a dyn Fn(T) -> T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupSolution<T> {
    pub relay_speed: T,
    pub member_speeds: Vec<T>,
    /// No relay speed admits every member within its distance bound.
    pub violated: bool,
}

/// Jointly optimizes a relay and its transmitters. The relay speed is
/// searched on a grid (then refined); for each relay speed every member is
/// optimized over the speeds keeping it within `d_max`.
pub fn optimize_relay_group<T: Scalar>(
    relay: &UavState<T>,
    relay_bounds: SpeedBounds<T>,
    relay_objective: &dyn Fn(T) -> T,
    members: &[GroupMember<'_, T>],
    opts: SearchOptions<T>,
) -> GroupSolution<T> {
    let eval = |vr: T| -> Option<(T, Vec<T>)> {
        let q = relay.position_after(vr);
        let mut total = relay_objective(vr);
        let mut speeds = Vec::with_capacity(members.len());
        for m in members {
            let iv = distance_interval(m.uav, q, m.d_max, m.bounds)?;
            let (v, y) = maximize_1d(m.objective, iv.lower, iv.upper, opts);
            total += y;
            speeds.push(v);
        }
        Some((total, speeds))
    };
    let mut best: Option<(T, T, Vec<T>)> = None;
    for vr in grid(relay_bounds.lower, relay_bounds.upper, opts.step) {
        if let Some((y, s)) = eval(vr) {
            if best.as_ref().is_none_or(|b| y > b.1) {
                best = Some((vr, y, s));
            }
        }
    }
    if let Some((vr, y, s)) = best {
        let score = |v: T| eval(v).map_or(T::neg_infinity(), |e| e.0);
        let lo = (vr - opts.step).max(relay_bounds.lower);
        let hi = (vr + opts.step).min(relay_bounds.upper);
        let fine = SearchOptions {
            step: hi - lo,
            tol: opts.tol,
        };
        let (v2, y2) = maximize_1d(score, lo, hi, fine);
        let (relay_speed, member_speeds) = match eval(v2) {
            Some((_, s2)) if y2 > y => (v2, s2),
            _ => (vr, s),
        };
        return GroupSolution {
            relay_speed,
            member_speeds,
            violated: false,
        };
    }
    // No feasible relay speed: minimize the summed excess distance.
    let closest = |vr: T| -> (T, Vec<T>) {
        let q = relay.position_after(vr);
        let mut excess = T::zero();
        let mut speeds = Vec::with_capacity(members.len());
        for m in members {
            let a = m.uav.position - q;
            let w = m.uav.direction;
            let ww = w.x * w.x + w.y * w.y + w.z * w.z;
            let v = if ww > T::zero() {
                m.bounds.clamp(-(a.x * w.x + a.y * w.y + a.z * w.z) / ww)
            } else {
                m.bounds.lower
            };
            let d = distance_uav_uav(m.uav.position_after(v), q);
            excess += (d - m.d_max).max(T::zero());
            speeds.push(v);
        }
        (excess, speeds)
    };
    let mut best = (relay_bounds.lower, closest(relay_bounds.lower));
    for vr in grid(relay_bounds.lower, relay_bounds.upper, opts.step).skip(1) {
        let c = closest(vr);
        if c.0 < best.1 .0 {
            best = (vr, c);
        }
    }
    GroupSolution {
        relay_speed: best.0,
        member_speeds: best.1 .1,
        violated: true,
    }
}

/// Speed optimization of one relay and one transmitter.
#[allow(clippy::too_many_arguments)]
pub fn optimize_u2u_pair<T: Scalar>(
    tx: &UavState<T>,
    rx: &UavState<T>,
    bounds_tx: SpeedBounds<T>,
    bounds_rx: SpeedBounds<T>,
    d_max: T,
    tx_objective: &dyn Fn(T) -> T,
    rx_objective: &dyn Fn(T) -> T,
    opts: SearchOptions<T>,
) -> (T, T, bool) {
    let m = [GroupMember {
        uav: tx,
        bounds: bounds_tx,
        d_max,
        objective: tx_objective,
    }];
    let s = optimize_relay_group(rx, bounds_rx, rx_objective, &m, opts);
    (s.member_speeds[0], s.relay_speed, s.violated)
}

/// Frozen context of one speed step.
pub struct SpeedProblem<'a, T> {
    pub layout: &'a LinkLayout,
    /// Powers at the current iterate's end-of-slot positions.
    pub powers: &'a LinkPowers<T>,
    pub phi: &'a PhiMatrix,
    pub psi: &'a PsiMatrix,
    pub params: &'a ChannelParams<T>,
    pub bs_height: T,
    pub uavs: &'a [UavState<T>],
    pub bounds: &'a [SpeedBounds<T>],
    pub r_min: T,
    pub opts: SearchOptions<T>,
}

impl<T: Scalar> SpeedProblem<'_, T> {
    fn leak_on(&self, k: usize, except: Option<usize>) -> T {
        let mut leak = T::zero();
        for l in self.psi.col_ones(k) {
            if Some(l) != except {
                leak += self.powers.u2u_leak[l][k];
            }
        }
        leak
    }

    fn bs_power(&self, uav: usize, speed: T) -> T {
        u2i_received_power_w(self.uavs[uav].position_after(speed), self.bs_height, self.params).unwrap_or(T::zero())
    }

    /// U2I rate of the UAV on Φ row `row` when it flies at `speed`.
    pub fn row_objective(&self, row: usize, uav: usize, speed: T) -> T {
        let s = self.bs_power(uav, speed);
        let mut total = T::zero();
        for k in self.phi.row_ones(row) {
            total += T::shannon(s / (self.powers.noise + self.leak_on(k, None)));
        }
        total
    }

    /// Uplink rate of the channels U2U link `l` reuses, with its
    /// transmitter flying at `speed`.
    pub fn leak_objective(&self, l: usize, speed: T) -> T {
        let tx = self.layout.u2u[l].tx;
        let w = self.bs_power(tx, speed);
        let mut total = T::zero();
        for k in self.psi.row_ones(l) {
            if let Some(r) = self.phi.col_ones(k).next() {
                let i = self.powers.noise + self.leak_on(k, Some(l)) + w;
                total += T::shannon(self.powers.row_signal[r][k] / i);
            }
        }
        total
    }

    /// Frozen-interference distance bound of U2U link `l`.
    pub fn distance_limit(&self, l: usize) -> Result<T> {
        let interference: Vec<T> = self
            .psi
            .row_ones(l)
            .filter(|&k| !self.powers.relay_blocked(self.phi, l, k))
            .map(|k| {
                let mut i = self.powers.fixed_u2u_interference(self.phi, l, k);
                for m in self.psi.col_ones(k) {
                    if m != l {
                        i += self.powers.u2u_cross[l][m][k];
                    }
                }
                i
            })
            .collect();
        let coeff = self.params.tx_power_w() * self.params.gain_linear() * self.params.fading_gain;
        u2u_max_distance(l, &interference, self.r_min, coeff, self.params.alpha)
    }

    /// Chooses every UAV's speed.
    pub fn solve(&self) -> Result<SpeedDecision<T>> {
        let n = self.uavs.len();
        let mut speeds: Vec<Option<T>> = vec![None; n];
        let mut violations = Vec::new();
        let active: Vec<usize> = (0..self.layout.n_u2u()).filter(|&l| self.psi.row_sum(l) > 0).collect();

        let mut relays: Vec<usize> = active.iter().map(|&l| self.layout.u2u[l].relay).collect();
        relays.sort_unstable();
        relays.dedup();
        for &relay in &relays {
            let links: Vec<usize> = active.iter().copied().filter(|&l| self.layout.u2u[l].relay == relay).collect();
            let d_max = links.iter().map(|&l| self.distance_limit(l)).collect::<Result<Vec<_>>>()?;
            let objectives: Vec<Box<dyn Fn(T) -> T + '_>> = links
                .iter()
                .map(|&l| Box::new(move |v| self.leak_objective(l, v)) as Box<dyn Fn(T) -> T>)
                .collect();
            let members: Vec<GroupMember<'_, T>> = links
                .iter()
                .zip(&d_max)
                .zip(&objectives)
                .map(|((&l, &d), f)| {
                    let tx = self.layout.u2u[l].tx;
                    GroupMember {
                        uav: &self.uavs[tx],
                        bounds: self.bounds[tx],
                        d_max: d,
                        objective: f.as_ref(),
                    }
                })
                .collect();
            let row = self.layout.row_of_uav(relay);
            let relay_obj = |v: T| row.map_or(T::zero(), |r| self.row_objective(r, relay, v));
            let sol = optimize_relay_group(&self.uavs[relay], self.bounds[relay], &relay_obj, &members, self.opts);
            speeds[relay] = Some(sol.relay_speed);
            for (&l, v) in links.iter().zip(sol.member_speeds) {
                speeds[self.layout.u2u[l].tx] = Some(v);
            }
            if sol.violated {
                violations.extend(links);
            }
        }
        for (i, slot) in speeds.iter_mut().enumerate() {
            if slot.is_some() {
                continue;
            }
            let b = self.bounds[i];
            let v = if let Some(r) = self.layout.row_of_uav(i) {
                maximize_1d(|v| self.row_objective(r, i, v), b.lower, b.upper, self.opts).0
            } else if let Some(l) = self.layout.u2u.iter().position(|u| u.tx == i) {
                maximize_1d(|v| self.leak_objective(l, v), b.lower, b.upper, self.opts).0
            } else {
                b.lower
            };
            *slot = Some(v);
        }
        violations.sort_unstable();
        Ok(SpeedDecision {
            speeds: speeds.into_iter().map(|v| v.expect("every UAV assigned")).collect(),
            violations,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn uav(id: usize, p: Vec3<f64>, dir: Vec3<f64>, progress: f64) -> UavState<f64> {
        UavState {
            id,
            position: p,
            direction: dir,
            trajectory_length: 300.0,
            progress,
            cache_bits: 0.0,
        }
    }

    fn x() -> Vec3<f64> {
        Vec3::new(1.0, 0.0, 0.0)
    }

    #[test]
    fn trajectory_bounds_stop_at_the_end() {
        let o = Vec3::zero();
        let b = trajectory_bounds(&uav(0, o, x(), 295.0), 3, 40, 10.0).unwrap();
        assert_eq!((b.lower, b.upper), (0.0, 5.0));
        let b = trajectory_bounds(&uav(0, o, x(), 300.0), 3, 40, 10.0).unwrap();
        assert_eq!((b.lower, b.upper), (0.0, 0.0));
        let b = trajectory_bounds(&uav(0, o, x(), 290.0), 29, 30, 10.0).unwrap();
        assert_eq!((b.lower, b.upper), (10.0, 10.0));
    }

    #[test]
    fn bounds_examples() {
        let o = Vec3::zero();
        let b = feasible_bounds(&uav(0, o, x(), 290.0), 29, 30, 10.0).unwrap();
        assert_eq!((b.lower, b.upper), (10.0, 10.0));
        let b = feasible_bounds(&uav(0, o, x(), 300.0), 5, 30, 10.0).unwrap();
        assert_eq!((b.lower, b.upper), (0.0, 10.0));
        let b = feasible_bounds(&uav(0, o, x(), 0.0), 0, 30, 10.0).unwrap();
        assert_eq!((b.lower, b.upper), (10.0, 10.0));
        let b = feasible_bounds(&uav(0, o, x(), 0.0), 0, 40, 10.0).unwrap();
        assert_eq!((b.lower, b.upper), (0.0, 10.0));
        let err = feasible_bounds(&uav(0, o, x(), 0.0), 0, 29, 10.0).unwrap_err();
        assert!(matches!(err, Error::HorizonInfeasible { .. }));
        assert!(feasible_bounds(&uav(0, o, x(), 0.0), 30, 30, 10.0).is_err());
    }

    #[test]
    fn max_distance_single_channel() {
        let (coeff, noise, alpha) = (0.2 * 10f64.powf(-3.15), 10f64.powf(-12.6), 2.0);
        let d = u2u_max_distance(0, &[noise], 10.0, coeff, alpha).unwrap();
        assert!((d - (coeff / (noise * 1023.0)).sqrt()).abs() < 1e-9 * d);
        let back = f64::shannon(coeff * d.powf(-alpha) / noise);
        assert!((back - 10.0).abs() < 1e-12);
        let d2 = u2u_max_distance(0, &[2.0 * noise], 10.0, coeff, alpha).unwrap();
        assert!((d / d2 - 2f64.sqrt()).abs() < 1e-12);
        assert!(u2u_max_distance(0, &[noise], 0.0, coeff, alpha).unwrap().is_infinite());
        assert!(matches!(
            u2u_max_distance::<f64>(3, &[], 1.0, coeff, alpha),
            Err(Error::NoChannel { link: 3 })
        ));
    }

    #[test]
    fn max_distance_multi_channel_inverts_rate() {
        let (coeff, alpha) = (1e-4f64, 2.5);
        let ints = [1e-12, 4e-12, 3e-11];
        let d = u2u_max_distance(0, &ints, 14.0, coeff, alpha).unwrap();
        let rate: f64 = ints.iter().map(|i| f64::shannon(coeff * d.powf(-alpha) / i)).sum();
        assert!((rate - 14.0).abs() < 1e-9);
    }

    #[test]
    fn maximize_flat_picks_lower() {
        let o = SearchOptions::for_v_max(10.0);
        assert_eq!(maximize_1d(|_| 1.0, 2.0, 10.0, o).0, 2.0);
        assert_eq!(maximize_1d(|v: f64| v, 3.0, 3.0, o).0, 3.0);
        let (v, _) = maximize_1d(|v: f64| -(v - 3.7).powi(2), 0.0, 10.0, o);
        assert!((v - 3.7).abs() < 1e-6);
    }

    #[test]
    fn distance_interval_solves_quadratic() {
        let u = uav(0, Vec3::new(-10.0, 3.0, 0.0), x(), 0.0);
        let b = SpeedBounds { lower: 0.0, upper: 20.0 };
        let iv = distance_interval(&u, Vec3::zero(), 5.0, b).unwrap();
        assert!((iv.lower - 6.0).abs() < 1e-12 && (iv.upper - 14.0).abs() < 1e-12);
        assert!(distance_interval(&u, Vec3::zero(), 2.0, b).is_none());
    }

    #[test]
    fn diverging_pair_gets_closest_corner() {
        let tx = uav(0, Vec3::new(-50.0, 0.0, 100.0), Vec3::new(-1.0, 0.0, 0.0), 0.0);
        let rx = uav(1, Vec3::new(50.0, 0.0, 100.0), x(), 0.0);
        let b = SpeedBounds { lower: 2.0, upper: 10.0 };
        let zero = |_: f64| 0.0;
        let (vt, vr, bad) = optimize_u2u_pair(&tx, &rx, b, b, 20.0, &zero, &zero, SearchOptions::for_v_max(10.0));
        assert!(bad);
        assert_eq!((vt, vr), (2.0, 2.0));
    }

    #[test]
    fn decoupled_pair_matches_single() {
        let p = Vec3::new(30.0, 40.0, 100.0);
        let tx = uav(0, p, x(), 0.0);
        let rx = uav(1, p, x(), 0.0);
        let b = SpeedBounds { lower: 0.0, upper: 10.0 };
        let f_rx = |v: f64| (v * 0.7).sin();
        let f_tx = |v: f64| -(v - 4.0).abs();
        let o = SearchOptions::for_v_max(10.0);
        let (vt, vr, bad) = optimize_u2u_pair(&tx, &rx, b, b, 1e6, &f_tx, &f_rx, o);
        assert!(!bad);
        assert!((vr - maximize_1d(f_rx, 0.0, 10.0, o).0).abs() < 1e-6);
        assert!((vt - 4.0).abs() < 1e-6);
    }
}
