//! Command-line interface and parameter sweeps.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::alloc_u2i::{solve_u2i, AssignmentInstance};
use crate::alloc_u2u::{lfss, branch_and_bound, BnbOptions, U2uInstance};
use crate::config::SimConfig;
use crate::engine::{fmt_sig, run_simulation_traced, Policy, RunResult};
use crate::error::{Error, Result};
use crate::isasoa::Categorization;
use crate::Real;

/// Quantity varied by a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum SweepVariable {
    /// Number of U2I UAVs; the U2U count stays at `algorithm.n_u2u`.
    #[value(name = "n_u2i")]
    NU2i,
    /// Fraction of UAVs forced into U2U mode.
    #[value(name = "u2u_ratio")]
    U2uRatio,
    /// Horizon length in slots.
    #[value(name = "horizon_T")]
    #[serde(rename = "horizon_T")]
    HorizonT,
    #[value(name = "v_max")]
    VMax,
}

impl SweepVariable {
    pub fn name(self) -> &'static str {
        match self {
            SweepVariable::NU2i => "n_u2i",
            SweepVariable::U2uRatio => "u2u_ratio",
            SweepVariable::HorizonT => "horizon_T",
            SweepVariable::VMax => "v_max",
        }
    }

    /// Configuration for sweep point `value`.
    pub fn apply(self, base: &SimConfig, value: f64) -> Result<SimConfig> {
        let mut c = base.clone();
        let count = |v: f64, what: &str| -> Result<usize> {
            if v >= 0.0 && v.fract() == 0.0 && v.is_finite() {
                Ok(v as usize)
            } else {
                Err(Error::config(format!("{what} must be a non-negative integer, got {v}")))
            }
        };
        match self {
            SweepVariable::NU2i => {
                c.algorithm.categorization = Categorization::Forced;
                c.scenario.n_uavs = count(value, "n_u2i")? + c.algorithm.n_u2u;
            }
            SweepVariable::U2uRatio => {
                if !(0.0..=1.0).contains(&value) {
                    return Err(Error::config(format!("u2u_ratio must lie in [0, 1], got {value}")));
                }
                c.algorithm.categorization = Categorization::Forced;
                c.algorithm.n_u2u = (value * c.scenario.n_uavs as f64).round() as usize;
            }
            SweepVariable::HorizonT => c.scenario.horizon_t = count(value, "horizon_T")?,
            SweepVariable::VMax => c.scenario.v_max = value,
        }
        c.validate()?;
        Ok(c)
    }
}

/// A sweep over one variable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub variable: SweepVariable,
    pub values: Vec<f64>,
    pub replicas: usize,
    pub base: SimConfig,
    pub policies: Vec<Policy>,
}

/// Aggregate of one sweep point and policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub value: f64,
    pub policy: Policy,
    pub replicas: usize,
    pub failures: usize,
    pub mean_uplink_sum_rate: Real,
    pub stderr_uplink_sum_rate: Real,
    pub mean_u2u_sum_rate: Real,
    pub stderr_u2u_sum_rate: Real,
    pub mean_uploaded_bits: Real,
}

fn mean_stderr(xs: &[Real]) -> (Real, Real) {
    if xs.is_empty() {
        return (Real::NAN, Real::NAN);
    }
    let n = xs.len() as Real;
    let mean = xs.iter().sum::<Real>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<Real>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Parallelism from `UAV2X_THREADS`: `Some(0)` means sequential.
pub fn threads_from_env() -> Option<usize> {
    std::env::var("UAV2X_THREADS").ok().and_then(|v| v.trim().parse().ok())
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        if self.replicas == 0 {
            return Err(Error::config("replicas must be >= 1"));
        }
        if self.values.is_empty() || self.policies.is_empty() {
            return Err(Error::config("a sweep needs at least one value and one policy"));
        }
        self.base.validate()
    }

    /// Runs every point, replica and policy. Replica `r` uses seed
    /// `base seed + r` at every point, so points share scenarios.
    pub fn run(&self, threads: Option<usize>) -> Result<(Vec<SweepRow>, Vec<Result<RunResult>>)> {
        self.validate()?;
        let jobs: Vec<(usize, usize, Policy)> = (0..self.values.len())
            .flat_map(|p| (0..self.replicas).flat_map(move |r| self.policies.iter().map(move |&pol| (p, r, pol))))
            .collect();
        let job = |&(p, r, pol): &(usize, usize, Policy)| -> Result<RunResult> {
            let mut cfg = self.variable.apply(&self.base, self.values[p])?;
            cfg.scenario.rng_seed = self.base.scenario.rng_seed.wrapping_add(r as u64);
            run_simulation_traced(&cfg, pol, false)
        };
        let results: Vec<Result<RunResult>> = match threads {
            Some(0) => jobs.iter().map(job).collect(),
            Some(n) => rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::config(e.to_string()))?
                .install(|| jobs.par_iter().map(job).collect()),
            None => jobs.par_iter().map(job).collect(),
        };
        let mut rows = Vec::new();
        for (p, &value) in self.values.iter().enumerate() {
            for &pol in &self.policies {
                let runs: Vec<&Result<RunResult>> = jobs
                    .iter()
                    .zip(&results)
                    .filter(|((jp, _, jpol), _)| *jp == p && *jpol == pol)
                    .map(|(_, r)| r)
                    .collect();
                let ok: Vec<&RunResult> = runs.iter().filter_map(|r| r.as_ref().ok()).collect();
                let up: Vec<Real> = ok.iter().map(|r| r.mean_uplink_sum_rate).collect();
                let u2u: Vec<Real> = ok.iter().map(|r| r.mean_u2u_sum_rate).collect();
                let bits: Vec<Real> = ok.iter().map(|r| r.total_uploaded_bits).collect();
                let (m_up, s_up) = mean_stderr(&up);
                let (m_u2u, s_u2u) = mean_stderr(&u2u);
                rows.push(SweepRow {
                    value,
                    policy: pol,
                    replicas: self.replicas,
                    failures: runs.len() - ok.len(),
                    mean_uplink_sum_rate: m_up,
                    stderr_uplink_sum_rate: s_up,
                    mean_u2u_sum_rate: m_u2u,
                    stderr_u2u_sum_rate: s_u2u,
                    mean_uploaded_bits: mean_stderr(&bits).0,
                });
            }
        }
        Ok((rows, results))
    }
}

/// Runs the sweep and returns it as CSV.
pub fn run_experiment(spec: &ExperimentSpec, threads: Option<usize>) -> Result<String> {
    let (rows, _) = spec.run(threads)?;
    Ok(sweep_csv(spec.variable, &rows))
}

pub fn sweep_csv(variable: SweepVariable, rows: &[SweepRow]) -> String {
    let mut out = String::from(
        "variable,value,policy,replicas,failures,mean_uplink_sum_rate,stderr_uplink_sum_rate,mean_u2u_sum_rate,stderr_u2u_sum_rate,mean_uploaded_bits\n",
    );
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            variable.name(),
            fmt_sig(r.value),
            r.policy.name(),
            r.replicas,
            r.failures,
            fmt_sig(r.mean_uplink_sum_rate),
            fmt_sig(r.stderr_uplink_sum_rate),
            fmt_sig(r.mean_u2u_sum_rate),
            fmt_sig(r.stderr_u2u_sum_rate),
            fmt_sig(r.mean_uploaded_bits),
        ));
    }
    out
}

#[derive(Debug, Parser)]
#[command(name = "uav2x", version, about = "UAV-to-X cellular uplink simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PolicyArg {
    Isasoa,
    Greedy,
}

impl From<PolicyArg> for Policy {
    fn from(p: PolicyArg) -> Self {
        match p {
            PolicyArg::Isasoa => Policy::Isasoa,
            PolicyArg::Greedy => Policy::Greedy,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one simulation and write per-slot CSV and a JSON summary.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the scenario seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_enum, default_value = "isasoa")]
        policy: PolicyArg,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Branch-and-bound node budget; 0 searches exhaustively.
        #[arg(long)]
        bnb_budget: Option<u64>,
        /// Also write iteration traces and branch-and-bound traces.
        #[arg(long)]
        debug_trace: bool,
    },
    /// Sweep one variable over replicas and policies.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum)]
        var: SweepVariable,
        /// Comma-separated sweep values.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
        #[arg(long, default_value_t = 10)]
        replicas: usize,
        /// Base seed; replica `r` uses `seed + r`.
        #[arg(long)]
        seed: Option<u64>,
        /// Policies to run; both by default.
        #[arg(long, value_enum)]
        policy: Vec<PolicyArg>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long)]
        bnb_budget: Option<u64>,
    },
    /// Solve one U2I/CU assignment instance from a JSON fixture.
    SolveU2i {
        fixture: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Solve one U2U allocation instance from a JSON fixture.
    SolveU2u {
        fixture: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        bnb_budget: Option<u64>,
        /// Print the search trace as JSON lines on stderr.
        #[arg(long)]
        debug_trace: bool,
    },
}

/// Solver fixture: an instance plus an optional expected objective.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Fixture<I> {
    pub instance: I,
    #[serde(default)]
    pub expected_objective: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolveReport {
    pub feasible: bool,
    pub matrix: Vec<Vec<u8>>,
    pub objective: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub expected_objective: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub matches_expected: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nodes: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub infeasible_link: Option<usize>,
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Io(format!("{}: {e}", path.display()))
}

fn write_file(path: &Path, contents: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
        }
    }
    fs::write(path, contents).map_err(|e| io_err(path, e))
}

fn read_fixture<I: for<'de> Deserialize<'de>>(path: &Path) -> Result<Fixture<I>> {
    let text = fs::read_to_string(path).map_err(|e| Error::config(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Error::config(format!("{}: {e}", path.display())))
}

fn budget(b: Option<u64>, default: Option<u64>) -> Option<u64> {
    match b {
        Some(0) => None,
        Some(n) => Some(n),
        None => default,
    }
}

fn matches(obj: f64, expected: Option<f64>) -> Option<bool> {
    expected.map(|e| (obj - e).abs() <= 1e-9 * e.abs().max(1e-300))
}

fn emit(report: &SolveReport, out: &Option<PathBuf>) -> Result<()> {
    let text = serde_json::to_string_pretty(report).expect("report serializes") + "\n";
    match out {
        Some(p) => write_file(p, text.as_bytes()),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

/// Executes a parsed command.
pub fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate {
            config,
            seed,
            policy,
            out,
            bnb_budget,
            debug_trace,
        } => {
            let mut cfg = SimConfig::load(&config)?;
            if let Some(s) = seed {
                cfg.scenario.rng_seed = s;
            }
            cfg.algorithm.bnb_node_budget = budget(bnb_budget, cfg.algorithm.bnb_node_budget);
            let policy = Policy::from(policy);
            let run = run_simulation_traced(&cfg, policy, debug_trace)?;
            let mut csv = Vec::new();
            run.write_csv(&mut csv).expect("write to memory");
            write_file(&out.join(format!("slots_{}.csv", policy.name())), &csv)?;
            let summary = serde_json::to_string_pretty(&run.summary()).expect("summary serializes") + "\n";
            write_file(&out.join(format!("summary_{}.json", policy.name())), summary.as_bytes())?;
            if debug_trace {
                let mut t = Vec::new();
                run.write_trace_csv(&mut t).expect("write to memory");
                write_file(&out.join(format!("iter_trace_{}.csv", policy.name())), &t)?;
                let mut j = Vec::new();
                for s in &run.slots {
                    for e in &s.decision.bnb_trace {
                        let line = serde_json::json!({ "slot": s.slot, "trace": e });
                        writeln!(j, "{line}").expect("write to memory");
                    }
                }
                write_file(&out.join(format!("bnb_trace_{}.jsonl", policy.name())), &j)?;
            }
            Ok(())
        }
        Command::Sweep {
            config,
            var,
            values,
            replicas,
            seed,
            policy,
            out,
            bnb_budget,
        } => {
            let mut base = SimConfig::load(&config)?;
            if let Some(s) = seed {
                base.scenario.rng_seed = s;
            }
            base.algorithm.bnb_node_budget = budget(bnb_budget, base.algorithm.bnb_node_budget);
            let policies = if policy.is_empty() {
                vec![Policy::Isasoa, Policy::Greedy]
            } else {
                policy.into_iter().map(Policy::from).collect()
            };
            let spec = ExperimentSpec {
                variable: var,
                values,
                replicas,
                base,
                policies,
            };
            let csv = run_experiment(&spec, threads_from_env())?;
            write_file(&out.join(format!("sweep_{}.csv", var.name())), csv.as_bytes())
        }
        Command::SolveU2i { fixture, out } => {
            let f: Fixture<AssignmentInstance<f64>> = read_fixture(&fixture)?;
            f.instance.validate()?;
            let sol = solve_u2i(&f.instance);
            emit(
                &SolveReport {
                    feasible: true,
                    matrix: sol.phi.to_rows(),
                    objective: sol.objective,
                    expected_objective: f.expected_objective,
                    matches_expected: matches(sol.objective, f.expected_objective),
                    nodes: None,
                    infeasible_link: None,
                },
                &out,
            )
        }
        Command::SolveU2u {
            fixture,
            out,
            bnb_budget,
            debug_trace,
        } => {
            let f: Fixture<U2uInstance<f64>> = read_fixture(&fixture)?;
            f.instance.validate()?;
            let seed = match lfss(&f.instance) {
                Ok(p) => p,
                Err(e) => {
                    emit(
                        &SolveReport {
                            feasible: false,
                            matrix: e.partial.to_rows(),
                            objective: f64::NAN,
                            expected_objective: f.expected_objective,
                            matches_expected: None,
                            nodes: None,
                            infeasible_link: Some(e.link),
                        },
                        &out,
                    )?;
                    return Err(Error::U2uInfeasible { link: e.link });
                }
            };
            let opts = BnbOptions {
                node_budget: budget(bnb_budget, BnbOptions::default().node_budget),
                trace: debug_trace,
            };
            let res = branch_and_bound(&f.instance, &seed, &opts)?;
            if debug_trace {
                let mut err = std::io::stderr().lock();
                for e in &res.trace {
                    let _ = writeln!(err, "{}", serde_json::to_string(e).expect("trace serializes"));
                }
            }
            emit(
                &SolveReport {
                    feasible: true,
                    matrix: res.psi.to_rows(),
                    objective: res.objective,
                    expected_objective: f.expected_objective,
                    matches_expected: matches(res.objective, f.expected_objective),
                    nodes: Some(res.nodes),
                    infeasible_link: None,
                },
                &out,
            )
        }
    }
}

/// Exit code for an error: 2 for runtime infeasibility, 1 otherwise.
pub fn exit_code(e: &Error) -> i32 {
    if e.is_infeasibility() {
        2
    } else {
        1
    }
}

/// Parses `args` and runs; returns the process exit code.
pub fn main_with_args<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
