//! Scaling sweeps: many seeded runs per process count, summarized into one
//! row per (algorithm, N).

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::algo::build;
use crate::error::{Result, SimError};
use crate::machine::{simulate, AlgorithmKind, Workload};
use crate::memcc::Color;
use crate::monitors::{RmrReport, Status};
use crate::sched::{bl_adversarial_schedule, bl_adversarial_workload, random_schedule};
use crate::trace::StopReason;

/// How sessions are assigned in a sweep workload.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WorkloadTemplate {
    /// Process i always requests session i.
    AllConflicting,
    /// Everyone requests session 1.
    SingleSession,
    /// Sessions alternate between 1 and 2 by pid and invocation.
    TwoSessions,
}

impl WorkloadTemplate {
    pub fn build(self, n: usize, invocations: usize, cs_steps: u32) -> Result<Workload> {
        Workload::uniform(n, invocations, cs_steps, |p, k| match self {
            WorkloadTemplate::AllConflicting => p.get() as u64,
            WorkloadTemplate::SingleSession => 1,
            WorkloadTemplate::TwoSessions => 1 + ((p.get() + k) % 2) as u64,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            WorkloadTemplate::AllConflicting => "all_conflicting",
            WorkloadTemplate::SingleSession => "single_session",
            WorkloadTemplate::TwoSessions => "two_sessions",
        }
    }
}

impl std::str::FromStr for WorkloadTemplate {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self> {
        [
            WorkloadTemplate::AllConflicting,
            WorkloadTemplate::SingleSession,
            WorkloadTemplate::TwoSessions,
        ]
        .into_iter()
        .find(|t| t.name() == s)
        .ok_or_else(|| SimError::Config(format!("unknown workload template `{s}`")))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub algorithm: AlgorithmKind,
    pub ns: Vec<usize>,
    pub base_seed: u64,
    pub seeds: u64,
    pub invocations: usize,
    pub template: WorkloadTemplate,
    pub cs_steps: u32,
    /// Fairness window as a multiple of N.
    pub window_factor: usize,
    pub step_cap: u64,
    pub initial_color: Option<Color>,
    pub workers: usize,
}

impl SweepSpec {
    pub fn new(algorithm: AlgorithmKind, ns: Vec<usize>, seeds: u64) -> Self {
        SweepSpec {
            algorithm,
            ns,
            base_seed: 0,
            seeds,
            invocations: 3,
            template: WorkloadTemplate::AllConflicting,
            cs_steps: 1,
            window_factor: 2,
            step_cap: 1_000_000,
            initial_color: None,
            workers: 1,
        }
    }
}

/// Outcome of one seeded run.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SeedResult {
    pub seed: u64,
    pub max_rmr: u64,
    pub mean_rmr: f64,
    pub total_rmr: u64,
    pub completed: bool,
    pub violations: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    pub algorithm: AlgorithmKind,
    pub n: usize,
    pub runs: usize,
    /// Largest per-invocation RMR over every run.
    pub max_rmr: u64,
    /// Mean over runs of each run's mean per-invocation RMR.
    pub mean_rmr: f64,
    /// Largest whole-run RMR total.
    pub max_total_rmr: u64,
    pub incomplete_runs: usize,
    pub violations: usize,
}

fn one_run(spec: &SweepSpec, n: usize, seed: u64) -> Result<SeedResult> {
    let algo = build(spec.algorithm, n, spec.initial_color)?;
    let (workload, schedule) = if spec.algorithm == AlgorithmKind::Bl {
        (bl_adversarial_workload(n)?, bl_adversarial_schedule(n)?)
    } else {
        (
            spec.template.build(n, spec.invocations, spec.cs_steps)?,
            random_schedule(seed, spec.window_factor.max(1) * n),
        )
    };
    let out = simulate(algo, workload, &schedule, None, spec.step_cap)?;
    let rmr = RmrReport::from_trace(&out.trace);
    Ok(SeedResult {
        seed,
        max_rmr: rmr.total.max,
        mean_rmr: rmr.total.mean,
        total_rmr: rmr.grand_total,
        completed: out.trace.stop == StopReason::Completed,
        violations: out.verdicts.iter().filter(|v| v.status == Status::Fail).count(),
    })
}

/// All seeded runs for one N. The adversarial one-bit schedule is fixed,
/// so that algorithm runs once per N.
pub fn seed_results(spec: &SweepSpec, n: usize) -> Result<Vec<SeedResult>> {
    let seeds: Vec<u64> = if spec.algorithm == AlgorithmKind::Bl {
        vec![spec.base_seed]
    } else {
        (0..spec.seeds).map(|k| spec.base_seed + k).collect()
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(spec.workers.max(1))
        .build()
        .map_err(|e| SimError::Config(format!("worker pool: {e}")))?;
    pool.install(|| seeds.par_iter().map(|&s| one_run(spec, n, s)).collect())
}

pub fn sweep(spec: &SweepSpec) -> Result<Vec<SweepRow>> {
    if spec.ns.is_empty() {
        return Err(SimError::Config("sweep needs at least one process count".into()));
    }
    if spec.algorithm != AlgorithmKind::Bl && spec.seeds == 0 {
        return Err(SimError::Config("sweep needs at least one seed".into()));
    }
    spec.ns
        .iter()
        .map(|&n| {
            let results = seed_results(spec, n)?;
            let runs = results.len();
            Ok(SweepRow {
                algorithm: spec.algorithm,
                n,
                runs,
                max_rmr: results.iter().map(|r| r.max_rmr).max().unwrap_or(0),
                mean_rmr: results.iter().map(|r| r.mean_rmr).sum::<f64>() / runs.max(1) as f64,
                max_total_rmr: results.iter().map(|r| r.total_rmr).max().unwrap_or(0),
                incomplete_runs: results.iter().filter(|r| !r.completed).count(),
                violations: results.iter().map(|r| r.violations).sum(),
            })
        })
        .collect()
}

/// Ratios between consecutive rows of `value`, e.g. max RMR at 2N over N.
pub fn doubling_ratios(rows: &[SweepRow], value: impl Fn(&SweepRow) -> f64) -> Vec<f64> {
    rows.windows(2)
        .map(|w| value(&w[1]) / value(&w[0]).max(f64::MIN_POSITIVE))
        .collect()
}
