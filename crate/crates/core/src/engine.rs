//! Slot-by-slot sense-and-send protocol driver.
//!
//! Every slot: sensing adds data to each UAV cache, UAVs are categorized
//! and paired, the BS decides allocation and speeds, data moves out of the
//! pre-transmission caches, and UAVs advance.

use std::fmt::Write as _;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::config::SimConfig;
use crate::error::{Error, Result};
use crate::isasoa::{Categorization, IterTrace, SlotDecision, SlotProblem};
use crate::scenario::{advance_position, categorize_and_pair, categorize_forced, generate_scenario, ScenarioState};
use crate::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Policy {
    Isasoa,
    Greedy,
}

impl Policy {
    pub fn name(self) -> &'static str {
        match self {
            Policy::Isasoa => "isasoa",
            Policy::Greedy => "greedy",
        }
    }
}

impl std::str::FromStr for Policy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "isasoa" => Ok(Policy::Isasoa),
            "greedy" => Ok(Policy::Greedy),
            _ => Err(Error::config(format!("unknown policy {s:?}"))),
        }
    }
}

/// Record of one slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotLog {
    pub slot: usize,
    pub u2i_set: Vec<usize>,
    pub u2u_set: Vec<usize>,
    /// `(tx, relay)` pairs.
    pub pairing: Vec<(usize, usize)>,
    pub decision: SlotDecision<Real>,
    /// Objective after each iteration.
    pub trace: Vec<Real>,
    /// Bits each UAV uploaded to the BS.
    pub uplink_bits: Vec<Real>,
    pub total_uplink_bits: Real,
    /// Bits delivered over U2U links.
    pub u2u_bits: Real,
    /// Bits each UAV sent over its U2U link.
    pub u2u_sent: Vec<Real>,
    /// Bits each relay received.
    pub u2u_received: Vec<Real>,
    /// Sum of CU rates, bits/s/Hz.
    pub cu_rate: Real,
    pub sensed_bits: Real,
    /// Caches after the slot.
    pub caches: Vec<Real>,
    pub qos_violations: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub policy: Policy,
    pub seed: u64,
    pub slots: Vec<SlotLog>,
    /// Mean over slots of the uplink sum-rate, bits/s/Hz.
    pub mean_uplink_sum_rate: Real,
    /// Mean over slots of the summed U2U link rates, bits/s/Hz.
    pub mean_u2u_sum_rate: Real,
    pub total_uploaded_bits: Real,
    pub total_u2u_bits: Real,
    pub total_sensed_bits: Real,
    /// Whether each UAV covered its trajectory.
    pub completed: Vec<bool>,
}

/// Run-level summary written next to the slot CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub policy: Policy,
    pub seed: u64,
    pub slots: usize,
    pub mean_uplink_sum_rate: Real,
    pub mean_u2u_sum_rate: Real,
    pub total_uploaded_bits: Real,
    pub total_u2u_bits: Real,
    pub total_sensed_bits: Real,
    pub final_cache_bits: Real,
    pub completed: Vec<bool>,
    pub total_iterations: usize,
    pub unconverged_slots: usize,
    pub qos_violations: usize,
}

/// Runs the whole horizon for `cfg` under `policy`.
pub fn run_simulation(cfg: &SimConfig, policy: Policy) -> Result<RunResult> {
    run_simulation_traced(cfg, policy, false)
}

/// As [`run_simulation`], optionally keeping branch-and-bound traces in the
/// slot decisions.
pub fn run_simulation_traced(cfg: &SimConfig, policy: Policy, trace_bnb: bool) -> Result<RunResult> {
    cfg.validate()?;
    let sc = &cfg.scenario;
    let algo = &cfg.algorithm;
    let (f_sense, scale) = (cfg.engine.sense_bits_per_slot, cfg.engine.capacity_scale);
    let mut state: ScenarioState<Real> = generate_scenario(sc)?;
    let mut slots = Vec::with_capacity(sc.horizon_t);

    for t in 0..sc.horizon_t {
        state.slot = t;
        let before: Vec<Real> = state.uavs.iter().map(|u| u.cache_bits).collect();
        for u in &mut state.uavs {
            u.cache_bits += f_sense;
        }
        let mut qos = Vec::new();
        let categorized = match algo.categorization {
            Categorization::Threshold => categorize_and_pair(&state, &cfg.channel, algo.snr_threshold_db),
            Categorization::Forced => categorize_forced(&state, &cfg.channel, algo.n_u2u),
        };
        let cat = match categorized {
            Ok(s) => s,
            Err(Error::NoRelay(n)) => {
                qos.push(format!("no_relay:{n}"));
                ScenarioState {
                    u2i_set: Vec::new(),
                    u2u_set: Vec::new(),
                    pairing: Default::default(),
                    ..state.clone()
                }
            }
            Err(e) => return Err(e.in_slot(t)),
        };
        let problem = SlotProblem {
            state: &cat,
            channel: &cfg.channel,
            algo,
            n_subchannels: sc.n_subchannels,
            horizon: sc.horizon_t,
            v_max: sc.v_max,
            trace_bnb,
        };
        let (decision, trace) = match policy {
            Policy::Isasoa => problem.run_isasoa().map_err(|e| e.in_slot(t))?,
            Policy::Greedy => {
                let d = problem.run_greedy().map_err(|e| e.in_slot(t))?;
                let trace = IterTrace {
                    objective: vec![0.0, d.objective],
                };
                (d, trace)
            }
        };
        qos.extend(decision.dropped.iter().map(|l| format!("u2u_dropped:{}", cat.u2u_set[*l])));
        qos.extend(decision.rate_violations.iter().map(|l| format!("u2u_rate:{}", cat.u2u_set[*l])));
        qos.extend(decision.distance_violations.iter().map(|l| format!("u2u_distance:{}", cat.u2u_set[*l])));
        if decision.bnb_exhausted {
            qos.push("bnb_budget".into());
        }
        if !decision.converged {
            qos.push("max_iter".into());
        }

        // Transmission from the pre-transmission caches.
        let n = state.uavs.len();
        let pre: Vec<Real> = state.uavs.iter().map(|u| u.cache_bits).collect();
        let mut uplink = vec![0.0; n];
        let mut sent = vec![0.0; n];
        let mut received = vec![0.0; n];
        let mut cu_rate = 0.0;
        for (r, rates) in decision.rates.row_rate.iter().enumerate() {
            let rate: Real = decision.phi.row_ones(r).map(|k| rates[k]).sum();
            match cat.u2i_set.get(r) {
                Some(&i) => uplink[i] = pre[i].min(rate * scale),
                None => cu_rate += rate,
            }
        }
        for (l, &tx) in cat.u2u_set.iter().enumerate() {
            if decision.psi.row_sum(l) == 0 {
                continue;
            }
            let relay = cat.pairing[&tx];
            let bits = pre[tx].min(decision.rates.u2u_link_rate[l] * scale);
            sent[tx] = bits;
            received[relay] += bits;
        }
        let mut caches = Vec::with_capacity(n);
        for i in 0..n {
            let c = pre[i] - uplink[i] - sent[i] + received[i];
            let rhs = before[i] + f_sense + received[i] - uplink[i] - sent[i];
            if (c - rhs).abs() > 1e-9 * (1.0 + before[i] + f_sense + received[i]) || c < -1e-9 {
                return Err(Error::Contract(format!("cache conservation broken for UAV {i} in slot {t}")).in_slot(t));
            }
            state.uavs[i].cache_bits = c.max(0.0);
            caches.push(state.uavs[i].cache_bits);
        }
        for i in 0..n {
            state.uavs[i] = advance_position(&state.uavs[i], decision.speeds[i], sc.v_max).map_err(|e| e.in_slot(t))?;
        }
        let total_uplink_bits = uplink.iter().sum();
        slots.push(SlotLog {
            slot: t,
            u2i_set: cat.u2i_set.clone(),
            u2u_set: cat.u2u_set.clone(),
            pairing: cat.pairing.iter().map(|(&a, &b)| (a, b)).collect(),
            trace: trace.objective,
            uplink_bits: uplink,
            total_uplink_bits,
            u2u_bits: sent.iter().sum(),
            u2u_sent: sent,
            u2u_received: received,
            cu_rate,
            sensed_bits: f_sense * n as Real,
            caches,
            qos_violations: qos,
            decision,
        });
    }
    let n_slots = slots.len().max(1) as Real;
    let completed = state.uavs.iter().map(|u| u.progress >= u.trajectory_length - 1e-9).collect();
    Ok(RunResult {
        policy,
        seed: sc.rng_seed,
        mean_uplink_sum_rate: slots.iter().map(|s| s.decision.objective).sum::<Real>() / n_slots,
        mean_u2u_sum_rate: slots
            .iter()
            .map(|s| s.decision.rates.u2u_link_rate.iter().sum::<Real>())
            .sum::<Real>()
            / n_slots,
        total_uploaded_bits: slots.iter().map(|s| s.total_uplink_bits).sum(),
        total_u2u_bits: slots.iter().map(|s| s.u2u_bits).sum(),
        total_sensed_bits: slots.iter().map(|s| s.sensed_bits).sum(),
        completed,
        slots,
    })
}

impl RunResult {
    /// Checks the cache bookkeeping of every slot, that relays keep what
    /// they receive, and that only U2I UAVs upload.
    pub fn check_conservation(&self, sense_bits_per_slot: Real) -> Result<()> {
        let mut sensed = 0.0;
        let mut uploaded = 0.0;
        for (t, s) in self.slots.iter().enumerate() {
            let n = s.caches.len();
            for i in 0..n {
                let before = if t == 0 { 0.0 } else { self.slots[t - 1].caches[i] };
                let (up, sent, recv) = (s.uplink_bits[i], s.u2u_sent[i], s.u2u_received[i]);
                if up < 0.0 || sent < 0.0 || recv < 0.0 {
                    return Err(Error::Contract(format!("slot {t}: negative flow for UAV {i}")));
                }
                if up + sent > before + sense_bits_per_slot + 1e-9 {
                    return Err(Error::Contract(format!("slot {t}: UAV {i} sent more than its cache")));
                }
                let expect = before + sense_bits_per_slot + recv - up - sent;
                if (s.caches[i] - expect).abs() > 1e-9 * (1.0 + before + sense_bits_per_slot + recv) {
                    return Err(Error::Contract(format!(
                        "slot {t}: cache of UAV {i} is {} but bookkeeping gives {expect}",
                        s.caches[i]
                    )));
                }
                if up > 0.0 && !s.u2i_set.contains(&i) {
                    return Err(Error::Contract(format!("slot {t}: UAV {i} uploaded outside the U2I set")));
                }
                if sent > 0.0 && !s.u2u_set.contains(&i) {
                    return Err(Error::Contract(format!("slot {t}: UAV {i} sent U2U outside the U2U set")));
                }
            }
            let delivered: Real = s.u2u_received.iter().sum();
            if (delivered - s.u2u_bits).abs() > 1e-9 * (1.0 + s.u2u_bits) {
                return Err(Error::Contract(format!("slot {t}: relays received {delivered} of {} sent", s.u2u_bits)));
            }
            sensed += s.sensed_bits;
            uploaded += s.total_uplink_bits;
            let in_cache: Real = s.caches.iter().sum();
            if (sensed - uploaded - in_cache).abs() > 1e-9 * sensed.max(1.0) {
                return Err(Error::Contract(format!(
                    "slot {t}: sensed {sensed} != uploaded {uploaded} + cached {in_cache}"
                )));
            }
        }
        Ok(())
    }

    pub fn summary(&self) -> RunSummary {
        RunSummary {
            policy: self.policy,
            seed: self.seed,
            slots: self.slots.len(),
            mean_uplink_sum_rate: self.mean_uplink_sum_rate,
            mean_u2u_sum_rate: self.mean_u2u_sum_rate,
            total_uploaded_bits: self.total_uploaded_bits,
            total_u2u_bits: self.total_u2u_bits,
            total_sensed_bits: self.total_sensed_bits,
            final_cache_bits: self.slots.last().map_or(0.0, |s| s.caches.iter().sum()),
            completed: self.completed.clone(),
            total_iterations: self.slots.iter().map(|s| s.decision.iterations).sum(),
            unconverged_slots: self.slots.iter().filter(|s| !s.decision.converged).count(),
            qos_violations: self.slots.iter().map(|s| s.qos_violations.len()).sum(),
        }
    }

    pub const CSV_HEADER: &'static str = "slot,policy,objective,iterations,total_uplink_bits,u2u_bits,violations";

    pub fn write_csv(&self, mut w: impl Write) -> std::io::Result<()> {
        writeln!(w, "{}", Self::CSV_HEADER)?;
        for s in &self.slots {
            writeln!(
                w,
                "{},{},{},{},{},{},{}",
                s.slot,
                self.policy.name(),
                fmt_sig(s.decision.objective),
                s.decision.iterations,
                fmt_sig(s.total_uplink_bits),
                fmt_sig(s.u2u_bits),
                s.qos_violations.join(";")
            )?;
        }
        Ok(())
    }

    /// Iteration traces as CSV (`slot,iteration,objective`).
    pub fn write_trace_csv(&self, mut w: impl Write) -> std::io::Result<()> {
        writeln!(w, "slot,iteration,objective")?;
        for s in &self.slots {
            for (r, f) in s.trace.iter().enumerate() {
                writeln!(w, "{},{},{}", s.slot, r, fmt_sig(*f))?;
            }
        }
        Ok(())
    }
}

/// Formats `x` with 9 significant digits, in fixed notation for moderate
/// exponents and scientific otherwise; trailing zeros are dropped.
pub fn fmt_sig(x: Real) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{x:.8e}");
    let (mantissa, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("exponent");
    let trim = |s: &str| -> String {
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s.to_string()
        }
    };
    if (-5..9).contains(&exp) {
        let decimals = (8 - exp).max(0) as usize;
        trim(&format!("{x:.decimals$}"))
    } else {
        let mut out = trim(mantissa);
        let _ = write!(out, "e{}{:02}", if exp < 0 { '-' } else { '+' }, exp.abs());
        out
    }
}
