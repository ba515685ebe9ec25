//! Propagation, interference, SINR and rate computations.
//!
//! Power bookkeeping is linear (watts); dB only appears at the parameter
//! interface. All channels are frequency-flat, so per-subchannel powers repeat
//! across columns, but every matrix keeps the subchannel axis.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{PhiMatrix, PsiMatrix};
use crate::scalar::{sum, Scalar};
use crate::scenario::{bs_position, distance_uav_uav, CuState, ScenarioState, Vec3};

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Air-to-air distances are floored at this value (metres) so co-located
/// UAVs produce a large but finite received power.
pub const MIN_AIR_DISTANCE: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelParams<T> {
    pub carrier_hz: T,
    pub eta_los_db: T,
    pub eta_nlos_db: T,
    /// Environment constant `a` of the LoS probability.
    pub a_env: T,
    /// Environment constant `b` of the LoS probability.
    pub b_env: T,
    /// U2U pathloss exponent.
    pub alpha: T,
    /// Amplifier and antenna gain on air-to-air links.
    pub gain_g_db: T,
    pub noise_dbm: T,
    pub tx_power_dbm: T,
    /// Small-scale power gain on U2U links.
    #[serde(default = "one", bound(deserialize = "T: Scalar + Deserialize<'de>"))]
    pub fading_gain: T,
}

fn one<T: Scalar>() -> T {
    T::one()
}

impl<T: Scalar> Default for ChannelParams<T> {
    fn default() -> Self {
        Self {
            carrier_hz: T::of(1e9),
            eta_los_db: T::of(1.0),
            eta_nlos_db: T::of(20.0),
            a_env: T::of(12.0),
            b_env: T::of(0.135),
            alpha: T::of(2.0),
            gain_g_db: T::of(-31.5),
            noise_dbm: T::of(-96.0),
            tx_power_dbm: T::of(23.0),
            fading_gain: T::one(),
        }
    }
}

impl<T: Scalar> ChannelParams<T> {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.carrier_hz,
            self.eta_los_db,
            self.eta_nlos_db,
            self.a_env,
            self.b_env,
            self.alpha,
            self.gain_g_db,
            self.noise_dbm,
            self.tx_power_dbm,
            self.fading_gain,
        ];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::config("channel parameters must be finite"));
        }
        if self.alpha <= T::zero() {
            return Err(Error::config("alpha must be > 0"));
        }
        if self.b_env <= T::zero() {
            return Err(Error::config("b_env must be > 0"));
        }
        if self.carrier_hz <= T::zero() {
            return Err(Error::config("carrier_hz must be > 0"));
        }
        if self.fading_gain < T::zero() {
            return Err(Error::config("fading_gain must be >= 0"));
        }
        Ok(())
    }

    pub fn noise_w(&self) -> T {
        T::dbm_to_watts(self.noise_dbm)
    }

    pub fn tx_power_w(&self) -> T {
        T::dbm_to_watts(self.tx_power_dbm)
    }

    pub fn gain_linear(&self) -> T {
        T::from_db(self.gain_g_db)
    }

    pub fn cast<U: Scalar>(&self) -> ChannelParams<U> {
        let c = |v: T| U::of(v.to_f64_lossy());
        ChannelParams {
            carrier_hz: c(self.carrier_hz),
            eta_los_db: c(self.eta_los_db),
            eta_nlos_db: c(self.eta_nlos_db),
            a_env: c(self.a_env),
            b_env: c(self.b_env),
            alpha: c(self.alpha),
            gain_g_db: c(self.gain_g_db),
            noise_dbm: c(self.noise_dbm),
            tx_power_dbm: c(self.tx_power_dbm),
            fading_gain: c(self.fading_gain),
        }
    }
}

/// Distance-independent part of the free-space pathloss, in dB.
pub fn free_space_pathloss_db<T: Scalar>(carrier_hz: T) -> Result<T> {
    if !(carrier_hz > T::zero()) {
        return Err(Error::domain(format!("carrier frequency must be > 0, got {carrier_hz}")));
    }
    let twenty = T::of(20.0);
    let four_pi_over_c = T::of(4.0 * std::f64::consts::PI / SPEED_OF_LIGHT);
    Ok(twenty * carrier_hz.log10() + twenty * four_pi_over_c.log10())
}

/// LoS probability for an elevation angle in degrees.
pub fn los_probability<T: Scalar>(elevation_deg: T, a_env: T, b_env: T) -> T {
    T::one() / (T::one() + a_env * (-b_env * (elevation_deg - a_env)).exp())
}

/// Elevation of `air` seen from `ground`, degrees, clamped to `[0, 90]`.
pub fn elevation_deg<T: Scalar>(air: Vec3<T>, ground: Vec3<T>) -> T {
    let d = distance_uav_uav(air, ground);
    if d <= T::zero() {
        return T::of(90.0);
    }
    let s = ((air.z - ground.z) / d).max(-T::one()).min(T::one());
    s.asin().to_degrees().max(T::zero()).min(T::of(90.0))
}

/// Average air-to-ground pathloss (dB) between a UAV and a ground terminal.
pub fn air_to_ground_pathloss_db<T: Scalar>(air: Vec3<T>, ground: Vec3<T>, p: &ChannelParams<T>) -> Result<T> {
    let d = distance_uav_uav(air, ground);
    if !(d > T::zero()) {
        return Err(Error::domain("air-to-ground link with zero distance"));
    }
    let base = free_space_pathloss_db(p.carrier_hz)? + T::of(20.0) * d.log10();
    let p_los = los_probability(elevation_deg(air, ground), p.a_env, p.b_env);
    let pl_los = base + p.eta_los_db;
    let pl_nlos = base + p.eta_nlos_db;
    Ok(p_los * pl_los + (T::one() - p_los) * pl_nlos)
}

/// Average U2I pathloss to the BS at `(0, 0, bs_height)`, dB.
pub fn u2i_avg_pathloss_db<T: Scalar>(uav_pos: Vec3<T>, bs_height: T, p: &ChannelParams<T>) -> Result<T> {
    air_to_ground_pathloss_db(uav_pos, bs_position(bs_height), p)
}

/// Average power received at the BS from a UAV, watts.
pub fn u2i_received_power_w<T: Scalar>(uav_pos: Vec3<T>, bs_height: T, p: &ChannelParams<T>) -> Result<T> {
    Ok(p.tx_power_w() / T::from_db(u2i_avg_pathloss_db(uav_pos, bs_height, p)?))
}

/// Macrocell pathloss of a CU to the BS, dB (`f` in MHz, `d` in metres).
pub fn cu_pathloss_db<T: Scalar>(cu_pos: Vec3<T>, bs_height: T, p: &ChannelParams<T>) -> Result<T> {
    let d = distance_uav_uav(cu_pos, bs_position(bs_height));
    if !(d > T::zero()) {
        return Err(Error::domain("CU located at the BS"));
    }
    let f_mhz = p.carrier_hz / T::of(1e6);
    Ok(T::of(-55.9) + T::of(38.0) * d.log10() + (T::of(24.5) + T::of(1.5) * f_mhz / T::of(925.0)) * f_mhz.log10())
}

pub fn cu_received_power_w<T: Scalar>(cu_pos: Vec3<T>, bs_height: T, p: &ChannelParams<T>) -> Result<T> {
    Ok(p.tx_power_w() / T::from_db(cu_pathloss_db(cu_pos, bs_height, p)?))
}

/// Air-to-air received power at distance `d`, watts (fading excluded).
pub fn u2u_received_power_w<T: Scalar>(d: T, p: &ChannelParams<T>) -> Result<T> {
    if !(d > T::zero()) {
        return Err(Error::domain(format!("U2U distance must be > 0, got {d}")));
    }
    Ok(p.tx_power_w() * p.gain_linear() * d.powf(-p.alpha))
}

fn air_power<T: Scalar>(a: Vec3<T>, b: Vec3<T>, p: &ChannelParams<T>) -> T {
    let d = distance_uav_uav(a, b).max(T::of(MIN_AIR_DISTANCE));
    p.tx_power_w() * p.gain_linear() * d.powf(-p.alpha)
}

/// Interference a CU causes at a UAV receiver, using the reciprocal
/// air-to-ground channel.
pub fn cu_to_uav_power_w<T: Scalar>(cu_pos: Vec3<T>, uav_pos: Vec3<T>, p: &ChannelParams<T>) -> Result<T> {
    Ok(p.tx_power_w() / T::from_db(air_to_ground_pathloss_db(uav_pos, cu_pos, p)?))
}

/// Transmitter of a Φ row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RowLink {
    Uav(usize),
    Cu(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct U2uLink {
    pub tx: usize,
    pub relay: usize,
}

/// Row/link ordering of the allocation matrices for one slot: U2I UAVs in
/// ascending index, then CUs; U2U links in ascending transmitter index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkLayout {
    pub rows: Vec<RowLink>,
    pub u2u: Vec<U2uLink>,
    pub n_subchannels: usize,
}

impl LinkLayout {
    pub fn from_state<T: Scalar>(s: &ScenarioState<T>, n_subchannels: usize) -> Self {
        let rows = s
            .u2i_set
            .iter()
            .map(|&i| RowLink::Uav(i))
            .chain(s.cus.iter().map(|c| RowLink::Cu(c.id)))
            .collect();
        let u2u = s
            .u2u_set
            .iter()
            .map(|&tx| U2uLink {
                tx,
                relay: s.pairing[&tx],
            })
            .collect();
        Self {
            rows,
            u2u,
            n_subchannels,
        }
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_u2u(&self) -> usize {
        self.u2u.len()
    }

    /// Φ row of UAV `uav`, if it transmits U2I.
    pub fn row_of_uav(&self, uav: usize) -> Option<usize> {
        self.rows.iter().position(|r| *r == RowLink::Uav(uav))
    }
}

/// Received powers for every transmitter/receiver pair of a slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkPowers<T> {
    pub noise: T,
    /// `[row][k]` power at the BS from the Φ-row transmitter.
    pub row_signal: Vec<Vec<T>>,
    /// `[l][k]` power at the BS from U2U transmitter `l`.
    pub u2u_leak: Vec<Vec<T>>,
    /// `[l][k]` power at relay of `l` from its own transmitter.
    pub u2u_signal: Vec<Vec<T>>,
    /// `[l][m][k]` power at relay of `l` from U2U transmitter `m` (zero for `m == l`).
    pub u2u_cross: Vec<Vec<Vec<T>>>,
    /// `[l][row][k]` power at relay of `l` from the Φ-row transmitter (zero
    /// when that row is the relay itself).
    pub row_to_u2u: Vec<Vec<Vec<T>>>,
    /// Φ row of the relay of `l`. The relay cannot receive on a subchannel it
    /// transmits U2I on.
    pub relay_row: Vec<Option<usize>>,
}

impl<T: Scalar> LinkPowers<T> {
    /// Evaluates all powers for UAVs at `uav_pos` (indexed by UAV id).
    pub fn build(
        layout: &LinkLayout,
        uav_pos: &[Vec3<T>],
        cus: &[CuState<T>],
        bs_height: T,
        p: &ChannelParams<T>,
    ) -> Result<Self> {
        let k = layout.n_subchannels;
        let row_power = |r: &RowLink| -> Result<T> {
            match *r {
                RowLink::Uav(i) => u2i_received_power_w(uav_pos[i], bs_height, p),
                RowLink::Cu(c) => cu_received_power_w(cus[c].position, bs_height, p),
            }
        };
        let row_signal = layout
            .rows
            .iter()
            .map(|r| Ok(vec![row_power(r)?; k]))
            .collect::<Result<Vec<_>>>()?;
        let u2u_leak = layout
            .u2u
            .iter()
            .map(|l| Ok(vec![u2i_received_power_w(uav_pos[l.tx], bs_height, p)?; k]))
            .collect::<Result<Vec<_>>>()?;
        let g = p.fading_gain;
        let u2u_signal = layout
            .u2u
            .iter()
            .map(|l| vec![air_power(uav_pos[l.tx], uav_pos[l.relay], p) * g; k])
            .collect();
        let u2u_cross = layout
            .u2u
            .iter()
            .enumerate()
            .map(|(li, l)| {
                layout
                    .u2u
                    .iter()
                    .enumerate()
                    .map(|(mi, m)| {
                        let w = if mi == li {
                            T::zero()
                        } else {
                            air_power(uav_pos[m.tx], uav_pos[l.relay], p) * g
                        };
                        vec![w; k]
                    })
                    .collect()
            })
            .collect();
        let row_to_u2u = layout
            .u2u
            .iter()
            .map(|l| {
                layout
                    .rows
                    .iter()
                    .map(|r| {
                        let w = match *r {
                            RowLink::Uav(i) if i == l.relay => T::zero(),
                            RowLink::Uav(i) => air_power(uav_pos[i], uav_pos[l.relay], p),
                            RowLink::Cu(c) => cu_to_uav_power_w(cus[c].position, uav_pos[l.relay], p)?,
                        };
                        Ok(vec![w; k])
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        let relay_row = layout.u2u.iter().map(|l| layout.row_of_uav(l.relay)).collect();
        Ok(Self {
            noise: p.noise_w(),
            row_signal,
            u2u_leak,
            u2u_signal,
            u2u_cross,
            row_to_u2u,
            relay_row,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.row_signal.len()
    }

    pub fn n_u2u(&self) -> usize {
        self.u2u_signal.len()
    }

    pub fn n_subchannels(&self) -> usize {
        self.row_signal
            .first()
            .or(self.u2u_signal.first())
            .map_or(0, Vec::len)
    }

    /// Total U2U leakage at the BS on subchannel `k`.
    pub fn leakage(&self, psi: &PsiMatrix, k: usize) -> T {
        sum(psi.col_ones(k).map(|l| self.u2u_leak[l][k]))
    }

    /// Interference at the relay of `l` on `k` from Φ-assigned transmitters
    /// plus noise. Infinite when the relay itself transmits U2I on `k`.
    pub fn fixed_u2u_interference(&self, phi: &PhiMatrix, l: usize, k: usize) -> T {
        if self.relay_blocked(phi, l, k) {
            return T::infinity();
        }
        self.noise + sum(phi.col_ones(k).map(|r| self.row_to_u2u[l][r][k]))
    }

    pub fn relay_blocked(&self, phi: &PhiMatrix, l: usize, k: usize) -> bool {
        self.relay_row[l].is_some_and(|r| phi.get(r, k))
    }

    fn check_shapes(&self, phi: &PhiMatrix, psi: &PsiMatrix) -> Result<()> {
        let k = self.n_subchannels();
        if phi.rows() != self.n_rows() || (phi.rows() > 0 && phi.cols() != k) {
            return Err(Error::Shape(format!(
                "phi is {}x{}, expected {}x{k}",
                phi.rows(),
                phi.cols(),
                self.n_rows()
            )));
        }
        if psi.rows() != self.n_u2u() || (psi.rows() > 0 && psi.cols() != k) {
            return Err(Error::Shape(format!(
                "psi is {}x{}, expected {}x{k}",
                psi.rows(),
                psi.cols(),
                self.n_u2u()
            )));
        }
        Ok(())
    }
}

/// SINR and rates of one slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateReport<T> {
    /// `[row][k]` SINR at the BS if the row transmits on `k`.
    pub row_sinr: Vec<Vec<T>>,
    pub row_rate: Vec<Vec<T>>,
    /// `[l][k]` SINR at the relay if link `l` transmits on `k`.
    pub u2u_sinr: Vec<Vec<T>>,
    pub u2u_rate: Vec<Vec<T>>,
    /// Φ-masked sum of U2I and CU rates, bits/s/Hz.
    pub uplink_sum_rate: T,
    /// Ψ-masked rate of every U2U link.
    pub u2u_link_rate: Vec<T>,
}

/// Evaluates all SINRs and rates for the allocation `(phi, psi)`.
pub fn rates_from_powers<T: Scalar>(w: &LinkPowers<T>, phi: &PhiMatrix, psi: &PsiMatrix) -> Result<RateReport<T>> {
    w.check_shapes(phi, psi)?;
    let n_k = w.n_subchannels();
    for k in 0..n_k.min(phi.cols()) {
        if phi.col_sum(k) > 1 {
            return Err(Error::ConstraintViolation {
                constraint: "subchannel_exclusive",
                detail: format!("subchannel {k} carries {} U2I/CU links", phi.col_sum(k)),
            });
        }
    }
    let leak: Vec<T> = (0..n_k).map(|k| w.leakage(psi, k)).collect();
    let row_sinr: Vec<Vec<T>> = (0..w.n_rows())
        .map(|r| (0..n_k).map(|k| w.row_signal[r][k] / (w.noise + leak[k])).collect())
        .collect();
    let u2u_sinr: Vec<Vec<T>> = (0..w.n_u2u())
        .map(|l| {
            (0..n_k)
                .map(|k| {
                    let fixed = w.fixed_u2u_interference(phi, l, k);
                    if fixed.is_infinite() {
                        return T::zero();
                    }
                    let cross = sum(psi.col_ones(k).map(|m| w.u2u_cross[l][m][k]));
                    w.u2u_signal[l][k] / (fixed + cross)
                })
                .collect()
        })
        .collect();
    let rate = |m: &Vec<Vec<T>>| -> Vec<Vec<T>> { m.iter().map(|r| r.iter().map(|&s| T::shannon(s)).collect()).collect() };
    let row_rate = rate(&row_sinr);
    let u2u_rate = rate(&u2u_sinr);
    let mut uplink_sum_rate = T::zero();
    for (r, rates) in row_rate.iter().enumerate() {
        for (k, &x) in rates.iter().enumerate() {
            if phi.get(r, k) {
                uplink_sum_rate += x;
            }
        }
    }
    let u2u_link_rate = u2u_rate
        .iter()
        .enumerate()
        .map(|(l, rates)| sum(psi.row_ones(l).map(|k| rates[k])))
        .collect();
    Ok(RateReport {
        row_sinr,
        row_rate,
        u2u_sinr,
        u2u_rate,
        uplink_sum_rate,
        u2u_link_rate,
    })
}

/// Rates for the mode sets and pairing recorded in `s`, at the current
/// positions.
pub fn assemble_rates<T: Scalar>(
    s: &ScenarioState<T>,
    phi: &PhiMatrix,
    psi: &PsiMatrix,
    p: &ChannelParams<T>,
) -> Result<RateReport<T>> {
    let k = phi.cols().max(psi.cols());
    let layout = LinkLayout::from_state(s, k);
    let pos: Vec<Vec3<T>> = s.uavs.iter().map(|u| u.position).collect();
    let w = LinkPowers::build(&layout, &pos, &s.cus, s.bs_height, p)?;
    rates_from_powers(&w, phi, psi)
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeMap;

    use super::*;
    use crate::scalar::watts_to_dbm;
    use crate::scenario::UavState;

    fn p() -> ChannelParams<f64> {
        ChannelParams::default()
    }

    fn v(x: f64, y: f64, z: f64) -> Vec3<f64> {
        Vec3::new(x, y, z)
    }

    #[test]
    fn fspl_reference_points() {
        // 20 log10(1e9) + 20 log10(4 pi / c), mpmath at 40 digits
        let a = free_space_pathloss_db(1e9f64).unwrap();
        assert!((a - 32.447_783_221_883_37).abs() < 1e-9);
        let b = free_space_pathloss_db(2e9f64).unwrap();
        assert!((b - a - 20.0 * 2f64.log10()).abs() < 1e-9);
        let zero = free_space_pathloss_db(SPEED_OF_LIGHT / (4.0 * std::f64::consts::PI)).unwrap();
        assert!(zero.abs() < 1e-9);
        assert!(free_space_pathloss_db(0.0).is_err());
        assert!(free_space_pathloss_db(-1.0).is_err());
    }

    #[test]
    fn los_probability_reference_points() {
        assert!((los_probability(90.0f64, 12.0, 0.135) - 0.999_679_431_305_866_3).abs() < 1e-12);
        assert!((los_probability(45.0f64, 12.0, 0.135) - 0.877_621_139_555_520_7).abs() < 1e-12);
        assert_eq!(los_probability(12.0, 12.0, 0.135), 1.0 / 13.0);
        let mut prev = 0.0;
        for i in 0..=90 {
            let q = los_probability(i as f64, 12.0, 0.135);
            assert!(q > prev && q < 1.0);
            prev = q;
        }
    }

    #[test]
    fn overhead_pathloss_and_power() {
        let pos = v(0.0, 0.0, 1025.0);
        let pl = u2i_avg_pathloss_db(pos, 25.0, &p()).unwrap();
        assert!((pl - 93.453_874_027_071_9).abs() < 1e-9);
        let dbm = watts_to_dbm(u2i_received_power_w(pos, 25.0, &p()).unwrap());
        assert!((dbm + 70.453_874_027_071_9).abs() < 1e-9);
        assert!(u2i_avg_pathloss_db(v(0.0, 0.0, 25.0), 25.0, &p()).is_err());
    }

    #[test]
    fn pathloss_degenerate_and_scaling() {
        let flat = ChannelParams { eta_nlos_db: 1.0, ..p() };
        let a = u2i_avg_pathloss_db(v(500.0, 0.0, 30.0), 25.0, &flat).unwrap();
        let b = u2i_avg_pathloss_db(v(0.0, 500.0, 525.0), 25.0, &flat).unwrap();
        // with equal attenuations the LoS mix drops out
        let closed = |d: f64| free_space_pathloss_db(1e9f64).unwrap() + 20.0 * d.log10() + 1.0;
        assert!((a - closed(500.0249993750312)).abs() < 1e-9);
        assert!((b - closed(707.1067811865476)).abs() < 1e-9);

        // Doubling the distance at fixed elevation adds 20 log10 2 to both branches.
        let near = u2i_avg_pathloss_db(v(300.0, 0.0, 425.0), 25.0, &p()).unwrap();
        let far = u2i_avg_pathloss_db(v(600.0, 0.0, 825.0), 25.0, &p()).unwrap();
        assert!((far - near - 20.0 * 2f64.log10()).abs() < 1e-9);
    }

    #[test]
    fn received_power_unit_pathloss() {
        assert!((p().tx_power_w() - 0.199_526_231_496_887_96).abs() < 1e-15);
    }

    #[test]
    fn cu_pathloss_reference_points() {
        let pl = cu_pathloss_db(v(500.0, 0.0, 25.0), 25.0, &p()).unwrap();
        assert!((pl - 125.025_725_029_633_58).abs() < 1e-9);
        let far = cu_pathloss_db(v(5000.0, 0.0, 25.0), 25.0, &p()).unwrap();
        assert!((far - pl - 38.0).abs() < 1e-9);
        let p925 = ChannelParams { carrier_hz: 925e6, ..p() };
        let at1m = cu_pathloss_db(v(1.0, 0.0, 25.0), 25.0, &p925).unwrap();
        assert!((at1m - (-55.9 + 26.0 * 925f64.log10())).abs() < 1e-9);
        assert!(cu_pathloss_db(v(0.0, 0.0, 25.0), 25.0, &p()).is_err());
    }

    #[test]
    fn u2u_power_reference_points() {
        let w = u2u_received_power_w(100.0, &p()).unwrap();
        assert!((w - 1.412_537_544_622_754_3e-8).abs() < 1e-20);
        assert!((watts_to_dbm(w) + 48.5).abs() < 1e-9);
        let unit = ChannelParams { gain_g_db: 0.0, ..p() };
        assert!((u2u_received_power_w(1.0, &unit).unwrap() - unit.tx_power_w()).abs() < 1e-15);
        let q = u2u_received_power_w(400.0, &p()).unwrap();
        assert!((w / q - 16.0).abs() < 1e-9);
        assert!(u2u_received_power_w(0.0, &p()).is_err());
    }

    fn uav(id: usize, pos: Vec3<f64>) -> UavState<f64> {
        UavState {
            id,
            position: pos,
            direction: v(1.0, 0.0, 0.0),
            trajectory_length: 300.0,
            progress: 0.0,
            cache_bits: 0.0,
        }
    }

    /// UAV 0 is U2I, UAV 1 relays through it; one CU.
    fn two_link_state() -> ScenarioState<f64> {
        ScenarioState {
            uavs: vec![uav(0, v(100.0, 50.0, 120.0)), uav(1, v(700.0, 300.0, 60.0))],
            cus: vec![CuState {
                id: 0,
                position: v(-400.0, 200.0, 1.5),
            }],
            bs_height: 25.0,
            slot: 0,
            u2i_set: vec![0],
            u2u_set: vec![1],
            pairing: BTreeMap::from([(1, 0)]),
        }
    }

    #[test]
    fn no_underlay_equals_snr() {
        let s = two_link_state();
        let mut phi = PhiMatrix::zeros(2, 2);
        phi.set(0, 0, true);
        phi.set(1, 1, true);
        let psi = PsiMatrix::zeros(1, 2);
        let rep = assemble_rates(&s, &phi, &psi, &p()).unwrap();
        let noise = p().noise_w();
        let snr0 = u2i_received_power_w(s.uavs[0].position, 25.0, &p()).unwrap() / noise;
        let snr_cu = cu_received_power_w(s.cus[0].position, 25.0, &p()).unwrap() / noise;
        assert!((rep.row_sinr[0][0] / snr0 - 1.0).abs() < 1e-12);
        assert!((rep.row_sinr[1][1] / snr_cu - 1.0).abs() < 1e-12);
        let expect = (1.0 + snr0).log2() + (1.0 + snr_cu).log2();
        assert!((rep.uplink_sum_rate - expect).abs() < 1e-12);
    }

    #[test]
    fn shared_subchannel_hand_assembled() {
        let s = two_link_state();
        let pr = p();
        let mut phi = PhiMatrix::zeros(2, 2);
        phi.set(0, 0, true);
        phi.set(1, 1, true);
        let mut psi = PsiMatrix::zeros(1, 2);
        psi.set(0, 1, true);
        let rep = assemble_rates(&s, &phi, &psi, &pr).unwrap();

        // Scalar route: everything in dBm/dB, converted once.
        let mw = |dbm: f64| 10f64.powf(dbm / 10.0) / 1000.0;
        let noise = mw(-96.0);
        let pl_cu = -55.9 + 38.0 * crate::scenario::distance_to_bs(s.cus[0].position, 25.0).log10() + (24.5 + 1.5 * 1000.0 / 925.0) * 3.0;
        let cu_sig = mw(23.0 - pl_cu);
        let leak = mw(23.0 - u2i_avg_pathloss_db(s.uavs[1].position, 25.0, &pr).unwrap());
        let sinr_cu = cu_sig / (noise + leak);
        assert!((rep.row_sinr[1][1] / sinr_cu - 1.0).abs() < 1e-12);

        // U2U receiver on subchannel 1 hears the CU through the air-to-ground model.
        let d = distance_uav_uav(s.uavs[0].position, s.uavs[1].position);
        let sig = mw(23.0 - 31.5) / (d * d);
        let cu_i = mw(23.0 - air_to_ground_pathloss_db(s.uavs[0].position, s.cus[0].position, &pr).unwrap());
        let u2u = sig / (noise + cu_i);
        assert!((rep.u2u_sinr[0][1] / u2u - 1.0).abs() < 1e-12);
        assert!((rep.u2u_link_rate[0] - (1.0 + u2u).log2()).abs() < 1e-12);
        // relay transmits U2I on subchannel 0
        assert_eq!(rep.u2u_sinr[0][0], 0.0);
        assert!(
            (rep.uplink_sum_rate - (rep.row_rate[0][0] + (1.0 + sinr_cu).log2())).abs() < 1e-12
        );
    }

    #[test]
    fn more_noise_lowers_every_sinr() {
        let s = two_link_state();
        let mut phi = PhiMatrix::zeros(2, 2);
        phi.set(0, 0, true);
        phi.set(1, 1, true);
        let mut psi = PsiMatrix::zeros(1, 2);
        psi.set(0, 1, true);
        let a = assemble_rates(&s, &phi, &psi, &p()).unwrap();
        let loud = ChannelParams { noise_dbm: -96.0 + 10.0 * 2f64.log10(), ..p() };
        let b = assemble_rates(&s, &phi, &psi, &loud).unwrap();
        for (ra, rb) in a.row_sinr.iter().zip(&b.row_sinr) {
            for (x, y) in ra.iter().zip(rb) {
                assert!(y < x);
            }
        }
        assert!(b.u2u_sinr[0][1] < a.u2u_sinr[0][1]);
    }

    #[test]
    fn rejects_shared_phi_column() {
        let s = two_link_state();
        let mut phi = PhiMatrix::zeros(2, 2);
        phi.set(0, 0, true);
        phi.set(1, 0, true);
        let err = assemble_rates(&s, &phi, &PsiMatrix::zeros(1, 2), &p()).unwrap_err();
        assert!(matches!(err, Error::ConstraintViolation { constraint: "subchannel_exclusive", .. }));
    }

    #[test]
    fn works_in_f32() {
        let pf = ChannelParams::<f32>::default();
        let pl = u2i_avg_pathloss_db(Vec3::new(0.0f32, 0.0, 1025.0), 25.0, &pf).unwrap();
        assert!((pl - 93.453_87).abs() < 1e-3);
    }
}
