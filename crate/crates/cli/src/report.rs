//! Text reports, CSV rows and JSON Lines traces.

use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use gmesim_core::algo::{block_events, BlockCounts};
use gmesim_core::memcc::Family;
use gmesim_core::monitors::{invocation_records, InvocationRecord, RmrReport, Stat};
use gmesim_core::sched::ExplorationReport;
use gmesim_core::sweep::SweepRow;
use gmesim_core::trace::Access;
use gmesim_core::{AlgorithmKind, CellValue, Pid, StopReason, Trace, Verdict};

use crate::error::CliError;

/// Invocation tables longer than this are summarized in the text report.
const MAX_LISTED_INVOCATIONS: usize = 64;

pub struct RunReport {
    pub scenario_hash: String,
    pub seed: u64,
    pub algorithm: AlgorithmKind,
    pub n: usize,
    pub steps: usize,
    pub stop: StopReason,
    pub deadlock_at: Option<u64>,
    pub verdicts: Vec<Verdict>,
    pub rmr: RmrReport,
    pub max_token: u64,
    pub blocks: Option<BlockCounts>,
    pub invocations: Vec<InvocationRecord>,
    pub trace_path: Option<String>,
}

/// Largest token number written during the run.
pub fn max_token(trace: &Trace) -> u64 {
    trace
        .events
        .iter()
        .filter_map(|e| match e.access {
            Access::Write { reg, value } if reg.family == Family::Token => match value {
                CellValue::Int(t) => Some(t),
                CellValue::Triple(t) => Some(t.number),
                _ => None,
            },
            _ => None,
        })
        .max()
        .unwrap_or(0)
}

impl RunReport {
    pub fn new(scenario_hash: &str, seed: u64, trace: &Trace, verdicts: Vec<Verdict>, trace_path: Option<String>) -> Self {
        let blocks = (trace.header.algorithm == AlgorithmKind::Bl)
            .then(|| block_events(trace).ok())
            .flatten();
        RunReport {
            scenario_hash: scenario_hash.to_string(),
            seed,
            algorithm: trace.header.algorithm,
            n: trace.header.n,
            steps: trace.events.len(),
            stop: trace.stop,
            deadlock_at: trace.deadlock_at,
            verdicts,
            rmr: RmrReport::from_trace(trace),
            max_token: max_token(trace),
            blocks,
            invocations: invocation_records(trace),
            trace_path,
        }
    }

    pub fn has_violation(&self) -> bool {
        self.verdicts.iter().any(Verdict::is_fail)
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "algorithm  {}  n={}  seed={}", self.algorithm, self.n, self.seed);
        let _ = writeln!(out, "scenario   {}", self.scenario_hash);
        let _ = write!(out, "stopped    {:?} after {} steps", self.stop, self.steps);
        if let Some(at) = self.deadlock_at {
            let _ = write!(out, " (deadlock at step {at})");
        }
        out.push('\n');

        out.push_str("\nverdicts\n");
        for v in &self.verdicts {
            let _ = writeln!(out, "  {v}");
        }

        let _ = writeln!(
            out,
            "\nrmr per completed invocation ({} of {})",
            self.rmr.invocations,
            self.invocations.len()
        );
        let _ = writeln!(out, "  {:<8} {:>6} {:>9} {:>6}", "section", "min", "mean", "max");
        for (name, s) in [
            ("doorway", self.rmr.doorway),
            ("waiting", self.rmr.waiting),
            ("exit", self.rmr.exit),
            ("total", self.rmr.total),
        ] {
            let Stat { min, mean, max } = s;
            let _ = writeln!(out, "  {name:<8} {min:>6} {mean:>9.2} {max:>6}");
        }
        let _ = writeln!(out, "  run total {}", self.rmr.grand_total);
        if self.algorithm != AlgorithmKind::Bl {
            let _ = writeln!(out, "\nmax token number {}", self.max_token);
        }

        if let Some(b) = &self.blocks {
            out.push_str("\nblock counts (waiter: total; by blocker)\n");
            for (i, total) in b.total.iter().enumerate() {
                let waiter = Pid::from_index(i);
                let by: Vec<String> = b
                    .by_blocker
                    .iter()
                    .filter(|((w, _), _)| *w == waiter)
                    .map(|((_, blocker), k)| format!("{blocker}:{k}"))
                    .collect();
                let _ = writeln!(out, "  {waiter}: {total}; {}", by.join(" "));
            }
        }

        if self.invocations.len() <= MAX_LISTED_INVOCATIONS {
            out.push_str("\ninvocations\n");
            let _ = writeln!(
                out,
                "  {:<4} {:>3} {:>7} {:>7} {:>7} {:>7} {:>6} {:>6}",
                "pid", "inv", "session", "token", "cs_at", "rmr", "waits", "exit"
            );
            for r in &self.invocations {
                let token = r.token_number().map_or("-".into(), |t| t.to_string());
                let cs = r.cs_enter.map_or("-".into(), |t| t.to_string());
                let _ = writeln!(
                    out,
                    "  {:<4} {:>3} {:>7} {:>7} {:>7} {:>7} {:>6} {:>6}",
                    r.pid.to_string(),
                    r.ordinal,
                    r.session,
                    token,
                    cs,
                    r.rmr.total(),
                    r.false_waits,
                    r.exit_accesses
                );
            }
        }
        if let Some(p) = &self.trace_path {
            let _ = writeln!(out, "\ntrace written to {p}");
        }
        out
    }
}

#[derive(Serialize)]
struct InvocationRow<'a> {
    scenario_hash: &'a str,
    seed: u64,
    algorithm: &'static str,
    n: usize,
    pid: usize,
    invocation: u32,
    session: u64,
    doorway_start: Option<u64>,
    doorway_complete: Option<u64>,
    cs_enter: Option<u64>,
    cs_exit: Option<u64>,
    exit_complete: Option<u64>,
    doorway_rmr: u64,
    waiting_rmr: u64,
    exit_rmr: u64,
    total_rmr: u64,
    false_waits: u64,
    exit_accesses: u64,
    token_number: Option<u64>,
}

fn create(path: &Path) -> Result<File, CliError> {
    File::create(path).map_err(|e| CliError::Io(path.display().to_string(), e))
}

/// One row per invocation.
pub fn write_invocations_csv(path: &Path, report: &RunReport) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(create(path)?);
    for r in &report.invocations {
        w.serialize(InvocationRow {
            scenario_hash: &report.scenario_hash,
            seed: report.seed,
            algorithm: report.algorithm.name(),
            n: report.n,
            pid: r.pid.get(),
            invocation: r.ordinal,
            session: r.session,
            doorway_start: r.doorway_start,
            doorway_complete: r.doorway_complete,
            cs_enter: r.cs_enter,
            cs_exit: r.cs_exit,
            exit_complete: r.exit_complete,
            doorway_rmr: r.rmr.doorway,
            waiting_rmr: r.rmr.waiting,
            exit_rmr: r.rmr.exit,
            total_rmr: r.rmr.total(),
            false_waits: r.false_waits,
            exit_accesses: r.exit_accesses,
            token_number: r.token_number(),
        })?;
    }
    w.flush().map_err(|e| CliError::Io(path.display().to_string(), e))
}

#[derive(Serialize)]
struct SweepCsvRow<'a> {
    scenario_hash: &'a str,
    seed: u64,
    algorithm: &'static str,
    n: usize,
    runs: usize,
    max_rmr: u64,
    mean_rmr: f64,
    max_total_rmr: u64,
    incomplete_runs: usize,
    violations: usize,
}

/// One row per process count; `seed` is the first seed of the range.
pub fn write_sweep_csv<W: Write>(out: W, hash: &str, seed: u64, rows: &[SweepRow]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(SweepCsvRow {
            scenario_hash: hash,
            seed,
            algorithm: r.algorithm.name(),
            n: r.n,
            runs: r.runs,
            max_rmr: r.max_rmr,
            mean_rmr: r.mean_rmr,
            max_total_rmr: r.max_total_rmr,
            incomplete_runs: r.incomplete_runs,
            violations: r.violations,
        })?;
    }
    w.flush().map_err(|e| CliError::Io("csv output".into(), e))
}

#[derive(Serialize)]
struct TraceEnd {
    stop: StopReason,
    deadlock_at: Option<u64>,
}

/// Header object, then one event per line, then the stop record.
pub fn write_trace_jsonl(path: &Path, trace: &Trace) -> Result<(), CliError> {
    let io = |e| CliError::Io(path.display().to_string(), e);
    let mut w = BufWriter::new(create(path)?);
    serde_json::to_writer(&mut w, &serde_json::json!({ "header": trace.header }))?;
    w.write_all(b"\n").map_err(io)?;
    for ev in &trace.events {
        serde_json::to_writer(&mut w, ev)?;
        w.write_all(b"\n").map_err(io)?;
    }
    serde_json::to_writer(
        &mut w,
        &serde_json::json!({ "end": TraceEnd { stop: trace.stop, deadlock_at: trace.deadlock_at } }),
    )?;
    w.write_all(b"\n").map_err(io)?;
    w.flush().map_err(io)
}

pub fn render_exploration(r: &ExplorationReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "states       {}", r.states);
    let _ = writeln!(out, "transitions  {}", r.transitions);
    let _ = writeln!(out, "max depth    {}", r.max_depth);
    let _ = writeln!(out, "completed    {}", r.completed);
    let _ = writeln!(out, "deadlocks    {}", r.deadlocks);
    let _ = writeln!(out, "max token    {}", r.max_token);
    let _ = writeln!(out, "ceiling cuts {}", r.ceiling_hits);
    let _ = writeln!(out, "truncated    {}", r.truncated);
    if r.violations.is_empty() {
        out.push_str("violations   none\n");
    } else {
        out.push_str("violations\n");
        for (p, k) in &r.violations {
            let _ = writeln!(out, "  {:<17} {k}", p.name());
        }
    }
    for c in &r.counterexamples {
        let path: Vec<String> = c.path.iter().map(|p| p.get().to_string()).collect();
        let _ = writeln!(
            out,
            "counterexample {} ({} steps): {}\n  schedule [{}]",
            c.property.name(),
            c.path.len(),
            c.detail,
            path.join(", ")
        );
    }
    out
}

pub fn render_sweep(rows: &[SweepRow], ratios: &[f64]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<7} {:>4} {:>5} {:>8} {:>9} {:>10} {:>10} {:>10}",
        "alg", "n", "runs", "max_rmr", "mean_rmr", "max_total", "incomplete", "violations"
    );
    for r in rows {
        let _ = writeln!(
            out,
            "{:<7} {:>4} {:>5} {:>8} {:>9.2} {:>10} {:>10} {:>10}",
            r.algorithm.name(),
            r.n,
            r.runs,
            r.max_rmr,
            r.mean_rmr,
            r.max_total_rmr,
            r.incomplete_runs,
            r.violations
        );
    }
    if !ratios.is_empty() {
        let shown: Vec<String> = ratios.iter().map(|q| format!("{q:.2}")).collect();
        let _ = writeln!(out, "ratios between consecutive rows: {}", shown.join(", "));
    }
    out
}
