//! Geometry, mobility and mode categorization.
//!
//! The base station sits at `(0, 0, H)` and the deployment area is centred on
//! it. UAVs fly straight horizontal trajectories at a fixed altitude; CUs are
//! static ground terminals.

use std::collections::BTreeMap;
use std::ops::{Add, Mul, Sub};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{self, ChannelParams};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec3<T> {
    pub x: T,
    pub y: T,
    pub z: T,
}

impl<T: Scalar> Vec3<T> {
    pub fn new(x: T, y: T, z: T) -> Self {
        Self { x, y, z }
    }

    pub fn zero() -> Self {
        Self::new(T::zero(), T::zero(), T::zero())
    }

    pub fn norm(self) -> T {
        (self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn cast<U: Scalar>(self) -> Vec3<U> {
        Vec3::new(
            U::of(self.x.to_f64_lossy()),
            U::of(self.y.to_f64_lossy()),
            U::of(self.z.to_f64_lossy()),
        )
    }
}

impl<T: Scalar> Add for Vec3<T> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl<T: Scalar> Sub for Vec3<T> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Self::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl<T: Scalar> Mul<T> for Vec3<T> {
    type Output = Self;
    fn mul(self, s: T) -> Self {
        Self::new(self.x * s, self.y * s, self.z * s)
    }
}

/// Distance between two UAVs (or any two points).
pub fn distance_uav_uav<T: Scalar>(a: Vec3<T>, b: Vec3<T>) -> T {
    (a - b).norm()
}

/// Distance from `p` to the base station at `(0, 0, bs_height)`.
pub fn distance_to_bs<T: Scalar>(p: Vec3<T>, bs_height: T) -> T {
    let dz = p.z - bs_height;
    (p.x * p.x + p.y * p.y + dz * dz).sqrt()
}

pub fn bs_position<T: Scalar>(bs_height: T) -> Vec3<T> {
    Vec3::new(T::zero(), T::zero(), bs_height)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UavState<T> {
    pub id: usize,
    pub position: Vec3<T>,
    /// Unit trajectory direction.
    pub direction: Vec3<T>,
    pub trajectory_length: T,
    /// Distance already travelled along the trajectory.
    pub progress: T,
    pub cache_bits: T,
}

impl<T: Scalar> UavState<T> {
    pub fn remaining(&self) -> T {
        self.trajectory_length - self.progress
    }

    /// Position after moving `speed` metres along the trajectory.
    pub fn position_after(&self, speed: T) -> Vec3<T> {
        self.position + self.direction * speed
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CuState<T> {
    pub id: usize,
    pub position: Vec3<T>,
}

/// Network snapshot at one slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioState<T> {
    pub uavs: Vec<UavState<T>>,
    pub cus: Vec<CuState<T>>,
    pub bs_height: T,
    pub slot: usize,
    /// UAVs transmitting directly to the BS, ascending.
    pub u2i_set: Vec<usize>,
    /// UAVs relaying through a U2I UAV, ascending.
    pub u2u_set: Vec<usize>,
    /// U2U transmitter -> relay.
    pub pairing: BTreeMap<usize, usize>,
}

impl<T: Scalar> ScenarioState<T> {
    pub fn n_uavs(&self) -> usize {
        self.uavs.len()
    }

    /// Checks the mode partition and pairing invariants.
    pub fn check_partition(&self) -> Result<()> {
        let n = self.uavs.len();
        let mut seen = vec![0u8; n];
        for &i in self.u2i_set.iter().chain(&self.u2u_set) {
            if i >= n {
                return Err(Error::Contract(format!("mode set references UAV {i} of {n}")));
            }
            seen[i] += 1;
        }
        if let Some(i) = seen.iter().position(|&c| c != 1) {
            return Err(Error::Contract(format!("UAV {i} is not in exactly one mode set")));
        }
        for (&tx, &rx) in &self.pairing {
            if !self.u2u_set.contains(&tx) {
                return Err(Error::Contract(format!("pairing source {tx} is not a U2U UAV")));
            }
            if !self.u2i_set.contains(&rx) {
                return Err(Error::Contract(format!("pairing target {rx} is not a U2I UAV")));
            }
        }
        Ok(())
    }
}

/// Scenario generation parameters. Keys match the JSON config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub n_uavs: usize,
    pub n_cus: usize,
    pub n_subchannels: usize,
    pub area_x: f64,
    pub area_y: f64,
    pub h_max: f64,
    pub bs_height: f64,
    #[serde(default = "default_cu_height")]
    pub cu_height: f64,
    pub v_max: f64,
    #[serde(rename = "horizon_T")]
    pub horizon_t: usize,
    pub trajectory_length: f64,
    pub rng_seed: u64,
}

fn default_cu_height() -> f64 {
    1.5
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            n_uavs: 20,
            n_cus: 5,
            n_subchannels: 10,
            area_x: 2000.0,
            area_y: 2000.0,
            h_max: 200.0,
            bs_height: 25.0,
            cu_height: 1.5,
            v_max: 10.0,
            horizon_t: 40,
            trajectory_length: 300.0,
            rng_seed: 1,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        let finite = [
            ("area_x", self.area_x),
            ("area_y", self.area_y),
            ("h_max", self.h_max),
            ("bs_height", self.bs_height),
            ("cu_height", self.cu_height),
            ("v_max", self.v_max),
            ("trajectory_length", self.trajectory_length),
        ];
        for (name, v) in finite {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::config(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        if self.horizon_t == 0 {
            return Err(Error::config("horizon_T must be at least 1"));
        }
        let reachable = self.horizon_t as f64 * self.v_max;
        if reachable < self.trajectory_length {
            return Err(Error::config(format!(
                "horizon_T * v_max = {reachable} < trajectory_length = {}; no instance can finish",
                self.trajectory_length
            )));
        }
        Ok(())
    }

    /// Whether UAVs can fly above the BS antenna. Only advisory.
    pub fn h_max_above_bs(&self) -> bool {
        self.h_max > self.bs_height
    }
}

const STREAM_UAV: u64 = 1 << 32;
const STREAM_CU: u64 = 2 << 32;

fn entity_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Draws a scenario from `cfg`.
///
/// Every UAV and CU owns an independent random stream keyed by its index, so
/// the first `n` entities are identical for any count `>= n` under the same
/// seed. All UAVs start in U2I mode; call [`categorize_and_pair`] afterwards.
pub fn generate_scenario<T: Scalar>(cfg: &ScenarioConfig) -> Result<ScenarioState<T>> {
    cfg.validate()?;
    let (hx, hy) = (cfg.area_x / 2.0, cfg.area_y / 2.0);
    let uavs = (0..cfg.n_uavs)
        .map(|i| {
            let mut rng = entity_rng(cfg.rng_seed, STREAM_UAV | i as u64);
            let x = rng.gen_range(-hx..=hx);
            let y = rng.gen_range(-hy..=hy);
            let z = rng.gen_range(0.0..=cfg.h_max);
            let heading = rng.gen_range(0.0..std::f64::consts::TAU);
            UavState {
                id: i,
                position: Vec3::new(T::of(x), T::of(y), T::of(z)),
                direction: Vec3::new(T::of(heading.cos()), T::of(heading.sin()), T::zero()),
                trajectory_length: T::of(cfg.trajectory_length),
                progress: T::zero(),
                cache_bits: T::zero(),
            }
        })
        .collect();
    let cus = (0..cfg.n_cus)
        .map(|i| {
            let mut rng = entity_rng(cfg.rng_seed, STREAM_CU | i as u64);
            let x = rng.gen_range(-hx..=hx);
            let y = rng.gen_range(-hy..=hy);
            CuState {
                id: i,
                position: Vec3::new(T::of(x), T::of(y), T::of(cfg.cu_height)),
            }
        })
        .collect();
    Ok(ScenarioState {
        uavs,
        cus,
        bs_height: T::of(cfg.bs_height),
        slot: 0,
        u2i_set: (0..cfg.n_uavs).collect(),
        u2u_set: Vec::new(),
        pairing: BTreeMap::new(),
    })
}

/// Moves `u` by `speed` metres along its direction.
pub fn advance_position<T: Scalar>(u: &UavState<T>, speed: T, v_max: T) -> Result<UavState<T>> {
    if !(speed >= T::zero() && speed <= v_max) {
        return Err(Error::domain(format!(
            "speed {speed} outside [0, {v_max}] for UAV {}",
            u.id
        )));
    }
    let mut next = u.clone();
    next.position = u.position_after(speed);
    next.progress = u.progress + speed;
    Ok(next)
}

/// Interference-free U2I SNR of every UAV (linear).
pub fn u2i_snr<T: Scalar>(s: &ScenarioState<T>, ch: &ChannelParams<T>) -> Result<Vec<T>> {
    let noise = ch.noise_w();
    s.uavs
        .iter()
        .map(|u| Ok(channel::u2i_received_power_w(u.position, s.bs_height, ch)? / noise))
        .collect()
}

/// Splits UAVs by interference-free U2I SNR against `snr_threshold_db` and
/// pairs every U2U UAV with its nearest U2I UAV.
pub fn categorize_and_pair<T: Scalar>(
    s: &ScenarioState<T>,
    ch: &ChannelParams<T>,
    snr_threshold_db: T,
) -> Result<ScenarioState<T>> {
    let threshold = T::from_db(snr_threshold_db);
    let snr = u2i_snr(s, ch)?;
    let (u2i, u2u): (Vec<usize>, Vec<usize>) = (0..s.uavs.len()).partition(|&i| snr[i] >= threshold);
    pair_nearest(s, u2i, u2u)
}

/// Labels the `n_u2u` lowest-SNR UAVs as U2U (ties: lower index first) and
/// pairs them as in [`categorize_and_pair`].
pub fn categorize_forced<T: Scalar>(
    s: &ScenarioState<T>,
    ch: &ChannelParams<T>,
    n_u2u: usize,
) -> Result<ScenarioState<T>> {
    let snr = u2i_snr(s, ch)?;
    let mut order: Vec<usize> = (0..s.uavs.len()).collect();
    order.sort_by(|&a, &b| snr[a].partial_cmp(&snr[b]).unwrap_or(std::cmp::Ordering::Equal).then(a.cmp(&b)));
    let n_u2u = n_u2u.min(order.len());
    let mut u2u: Vec<usize> = order[..n_u2u].to_vec();
    let mut u2i: Vec<usize> = order[n_u2u..].to_vec();
    u2u.sort_unstable();
    u2i.sort_unstable();
    pair_nearest(s, u2i, u2u)
}

fn pair_nearest<T: Scalar>(s: &ScenarioState<T>, u2i: Vec<usize>, u2u: Vec<usize>) -> Result<ScenarioState<T>> {
    if !u2u.is_empty() && u2i.is_empty() {
        return Err(Error::NoRelay(u2u.len()));
    }
    let mut pairing = BTreeMap::new();
    for &tx in &u2u {
        let p = s.uavs[tx].position;
        let mut best: Option<(usize, T)> = None;
        for &rx in &u2i {
            let d = distance_uav_uav(p, s.uavs[rx].position);
            if best.is_none_or(|(_, bd)| d < bd) {
                best = Some((rx, d));
            }
        }
        pairing.insert(tx, best.expect("u2i nonempty").0);
    }
    Ok(ScenarioState {
        u2i_set: u2i,
        u2u_set: u2u,
        pairing,
        ..s.clone()
    })
}
