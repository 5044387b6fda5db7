//! `gmesim`: run scenarios, explore them exhaustively, or sweep process
//! counts.
//!
//! Exit status: 0 all properties hold, 1 a property failed, 2 usage or
//! scenario error, 3 a step, state or depth cap cut the work short.

mod error;
mod report;
mod scenario;

use std::io::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use sha2::{Digest, Sha256};

use gmesim_core::machine::simulate;
use gmesim_core::sched::{explore, ExploreConfig};
use gmesim_core::sweep::{doubling_ratios, sweep, SweepSpec, WorkloadTemplate};
use gmesim_core::{AlgorithmKind, Color, Machine, MonitorSet, Schedule, StopReason};

use error::CliError;
use report::RunReport;

const PASS: u8 = 0;
const VIOLATION: u8 = 1;
const USAGE: u8 = 2;
const TRUNCATED: u8 = 3;

#[derive(Parser)]
#[command(name = "gmesim", version, about = "Cache-coherent simulator for (group) mutual exclusion algorithms")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one scenario under its schedule and check its monitors.
    Run(RunArgs),
    /// Enumerate every interleaving of a scenario's workload.
    Explore(ExploreArgs),
    /// Run many seeded schedules per process count and summarize RMR.
    Sweep(SweepArgs),
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    scenario: PathBuf,
    /// Overrides the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the scenario step cap.
    #[arg(long)]
    steps: Option<u64>,
    /// Writes the event trace as JSON Lines.
    #[arg(long)]
    trace_out: Option<PathBuf>,
    /// Writes one CSV row per invocation.
    #[arg(long)]
    csv_out: Option<PathBuf>,
}

#[derive(Args)]
struct ExploreArgs {
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long)]
    max_states: Option<usize>,
    #[arg(long)]
    max_depth: Option<usize>,
    /// Writes the replayed trace of the first counterexample.
    #[arg(long)]
    trace_out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    algorithm: AlgorithmKind,
    /// Comma-separated process counts.
    #[arg(long, value_delimiter = ',', required = true)]
    ns: Vec<usize>,
    /// Number of seeds per process count.
    #[arg(long, default_value_t = 50)]
    seeds: u64,
    /// First seed of the range.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "all_conflicting")]
    template: WorkloadTemplate,
    #[arg(long, default_value_t = 3)]
    invocations: usize,
    #[arg(long, default_value_t = 1)]
    cs_steps: u32,
    /// Fairness window as a multiple of N.
    #[arg(long, default_value_t = 2)]
    window_factor: usize,
    /// Step cap per run.
    #[arg(long, default_value_t = 1_000_000)]
    steps: u64,
    #[arg(long, value_parser = parse_color)]
    initial_color: Option<Color>,
    #[arg(long, default_value_t = 1)]
    workers: usize,
    /// Writes the CSV here instead of standard output.
    #[arg(long)]
    csv_out: Option<PathBuf>,
}

fn parse_color(s: &str) -> Result<Color, String> {
    match s {
        "white" => Ok(Color::White),
        "black" => Ok(Color::Black),
        other => Err(format!("unknown color `{other}`, expected white or black")),
    }
}

fn cmd_run(args: RunArgs) -> Result<u8, CliError> {
    let sc = scenario::load(&args.scenario)?;
    let seed = args.seed.unwrap_or(sc.seed);
    let cap = args.steps.unwrap_or(sc.step_cap);
    let schedule = sc.schedule(seed)?;
    let mut machine = Machine::new(sc.algorithm()?, sc.workload.clone())?;
    let mut scheduler = schedule.scheduler(sc.n)?;
    let mut monitors = MonitorSet::new(&machine.header(), &sc.properties());
    let out = gmesim_core::run(&mut machine, scheduler.as_mut(), &mut monitors, cap)?;

    if let Some(path) = &args.trace_out {
        report::write_trace_jsonl(path, &out.trace)?;
    }
    let trace_path = args.trace_out.as_ref().map(|p| p.display().to_string());
    let rep = RunReport::new(&sc.hash, seed, &out.trace, out.verdicts, trace_path);
    if let Some(path) = &args.csv_out {
        report::write_invocations_csv(path, &rep)?;
    }
    print!("{}", rep.render());
    Ok(if rep.has_violation() {
        VIOLATION
    } else if rep.stop == StopReason::StepCap {
        TRUNCATED
    } else {
        PASS
    })
}

fn cmd_explore(args: ExploreArgs) -> Result<u8, CliError> {
    let sc = scenario::load(&args.scenario)?;
    let defaults = ExploreConfig::default();
    let cfg = ExploreConfig {
        max_states: args.max_states.or(sc.explore.max_states).unwrap_or(defaults.max_states),
        max_depth: args.max_depth.or(sc.explore.max_depth).unwrap_or(defaults.max_depth),
        token_ceiling: sc.explore.token_ceiling,
        properties: sc.monitors.clone().unwrap_or(defaults.properties),
    };
    let algo = sc.algorithm()?;
    let rep = explore(algo.clone(), &sc.workload, &cfg)?;
    println!("algorithm  {}  n={}", sc.algorithm, sc.n);
    println!("scenario   {}", sc.hash);
    print!("{}", report::render_exploration(&rep));

    if let (Some(path), Some(cx)) = (&args.trace_out, rep.counterexamples.first()) {
        let schedule = Schedule::Scripted { pids: cx.path.clone() };
        let replay = simulate(algo, sc.workload.clone(), &schedule, Some(&[cx.property]), u64::MAX)?;
        report::write_trace_jsonl(path, &replay.trace)?;
        println!("counterexample trace written to {}", path.display());
    }
    Ok(if rep.total_violations() > 0 || rep.deadlocks > 0 {
        VIOLATION
    } else if rep.truncated || rep.ceiling_hits > 0 {
        TRUNCATED
    } else {
        PASS
    })
}

fn cmd_sweep(args: SweepArgs) -> Result<u8, CliError> {
    if args.initial_color.is_some() && args.algorithm != AlgorithmKind::Bwbgme {
        return Err(CliError::Usage("--initial-color applies to bwbgme only".into()));
    }
    let spec = SweepSpec {
        algorithm: args.algorithm,
        ns: args.ns,
        base_seed: args.seed,
        seeds: args.seeds,
        invocations: args.invocations,
        template: args.template,
        cs_steps: args.cs_steps,
        window_factor: args.window_factor,
        step_cap: args.steps,
        initial_color: args.initial_color,
        workers: args.workers,
    };
    let rows = sweep(&spec)?;
    let hash = hex::encode(Sha256::digest(serde_json::to_vec(&spec)?));
    // The one-bit algorithm is judged on whole-run RMR, the others per invocation.
    let ratios = if spec.algorithm == AlgorithmKind::Bl {
        doubling_ratios(&rows, |r| r.max_total_rmr as f64)
    } else {
        doubling_ratios(&rows, |r| r.max_rmr as f64)
    };
    match &args.csv_out {
        Some(path) => {
            let file = std::fs::File::create(path).map_err(|e| CliError::Io(path.display().to_string(), e))?;
            report::write_sweep_csv(file, &hash, spec.base_seed, &rows)?;
            print!("{}", report::render_sweep(&rows, &ratios));
        }
        None => report::write_sweep_csv(std::io::stdout().lock(), &hash, spec.base_seed, &rows)?,
    }
    Ok(if rows.iter().any(|r| r.violations > 0) {
        VIOLATION
    } else if rows.iter().any(|r| r.incomplete_runs > 0) {
        TRUNCATED
    } else {
        PASS
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Explore(a) => cmd_explore(a),
        Command::Sweep(a) => cmd_sweep(a),
    };
    let _ = std::io::stdout().flush();
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(USAGE)
        }
    }
}
