//! Versioned TOML scenario files.

use std::path::Path;
use std::sync::Arc;

use serde::Deserialize;
use sha2::{Digest, Sha256};

use gmesim_core::algo::{build, BwBakery, BwVariant};
use gmesim_core::sched::{bl_adversarial_schedule, bl_adversarial_workload, Directive, ScriptPlan, Until};
use gmesim_core::sweep::WorkloadTemplate;
use gmesim_core::{Algorithm, AlgorithmKind, Color, Machine, Marker, Pid, Property, Schedule, Workload};

use crate::error::CliError;

pub const FORMAT_VERSION: u32 = 1;
const DEFAULT_STEP_CAP: u64 = 1_000_000;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    version: u32,
    algorithm: AlgorithmKind,
    n: Option<usize>,
    seed: Option<u64>,
    steps: Option<u64>,
    initial_color: Option<Color>,
    monitors: Option<Vec<Property>>,
    variant: Option<RawVariant>,
    workload: Option<RawWorkload>,
    schedule: Option<RawSchedule>,
    explore: Option<RawExplore>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawVariant {
    #[serde(default)]
    skip_number_guard: bool,
    #[serde(default)]
    skip_opposite_check: bool,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawWorkload {
    sessions: Option<Vec<Vec<u64>>>,
    template: Option<WorkloadTemplate>,
    invocations: Option<usize>,
    cs_steps: Option<u32>,
}

#[derive(Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
enum RawSchedule {
    Random { window: Option<usize> },
    RoundRobin,
    Scripted { pids: Vec<usize> },
    BlAdversarial,
    Plan { directives: Vec<RawDirective> },
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDirective {
    pid: usize,
    until: Option<Milestone>,
    steps: Option<u32>,
    limit: Option<u32>,
    required: Option<bool>,
}

#[derive(Clone, Copy, Debug, Deserialize)]
#[serde(rename_all = "snake_case")]
enum Milestone {
    DoorwayStart,
    DoorwayComplete,
    CsEnter,
    CsExit,
    ExitComplete,
    Blocked,
    ColorRead,
    BitSet,
}

impl From<Milestone> for Until {
    fn from(m: Milestone) -> Until {
        match m {
            Milestone::DoorwayStart => Until::Marker(Marker::DoorwayStart),
            Milestone::DoorwayComplete => Until::Marker(Marker::DoorwayComplete),
            Milestone::CsEnter => Until::Marker(Marker::CsEnter),
            Milestone::CsExit => Until::Marker(Marker::CsExit),
            Milestone::ExitComplete => Until::Marker(Marker::ExitComplete),
            Milestone::Blocked => Until::Blocked,
            Milestone::ColorRead => Until::ColorRead,
            Milestone::BitSet => Until::BitSet,
        }
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawExplore {
    max_states: Option<usize>,
    max_depth: Option<usize>,
    token_ceiling: Option<u64>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum ScheduleSpec {
    /// Window defaults to 2N.
    Random { window: Option<usize> },
    RoundRobin,
    Scripted(Vec<Pid>),
    BlAdversarial,
    Plan(ScriptPlan),
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ExploreLimits {
    pub max_states: Option<usize>,
    pub max_depth: Option<usize>,
    pub token_ceiling: Option<u64>,
}

/// A validated scenario.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub algorithm: AlgorithmKind,
    pub n: usize,
    pub initial_color: Option<Color>,
    pub variant: Option<BwVariant>,
    pub workload: Workload,
    pub schedule: ScheduleSpec,
    pub monitors: Option<Vec<Property>>,
    pub seed: u64,
    pub step_cap: u64,
    pub explore: ExploreLimits,
    /// Hex SHA-256 of the file contents.
    pub hash: String,
}

/// 1-based line of `offset` in `src`.
fn line_at(src: &str, offset: usize) -> usize {
    src[..offset.min(src.len())].matches('\n').count() + 1
}

/// Line on which `key` is assigned, inside `[table]` when given.
fn line_of(src: &str, table: Option<&str>, key: &str) -> Option<usize> {
    let mut current: Option<String> = None;
    for (i, raw) in src.lines().enumerate() {
        let line = raw.trim();
        if let Some(name) = line.strip_prefix('[') {
            current = Some(name.trim_end_matches(']').trim().to_string());
            continue;
        }
        let assigns = line
            .strip_prefix(key)
            .is_some_and(|rest| rest.trim_start().starts_with('='));
        if assigns && current.as_deref() == table {
            return Some(i + 1);
        }
    }
    None
}

fn invalid(src: &str, table: Option<&str>, key: &str, message: impl Into<String>) -> CliError {
    CliError::Scenario {
        line: line_of(src, table, key),
        message: message.into(),
    }
}

pub fn load(path: &Path) -> Result<Scenario, CliError> {
    let src = std::fs::read_to_string(path).map_err(|e| CliError::Io(path.display().to_string(), e))?;
    parse(&src)
}

pub fn parse(src: &str) -> Result<Scenario, CliError> {
    let raw: RawScenario = toml::from_str(src).map_err(|e| CliError::Scenario {
        line: e.span().map(|s| line_at(src, s.start)),
        message: e.message().to_string(),
    })?;
    if raw.version != FORMAT_VERSION {
        return Err(invalid(
            src,
            None,
            "version",
            format!("unsupported version {}, expected {FORMAT_VERSION}", raw.version),
        ));
    }
    let kind = raw.algorithm;
    if kind != AlgorithmKind::Bwbgme {
        if raw.initial_color.is_some() {
            return Err(invalid(src, None, "initial_color", "initial_color applies to bwbgme only"));
        }
        if raw.variant.is_some() {
            return Err(CliError::Scenario {
                line: line_of_table(src, "variant"),
                message: "a variant applies to bwbgme only".into(),
            });
        }
    }
    let schedule_raw = raw.schedule.unwrap_or(RawSchedule::Random { window: None });
    let adversarial = matches!(schedule_raw, RawSchedule::BlAdversarial);
    if adversarial && kind != AlgorithmKind::Bl {
        return Err(invalid(
            src,
            Some("schedule"),
            "kind",
            "the bl_adversarial schedule applies to bl only",
        ));
    }

    let workload = match (raw.workload, adversarial) {
        (None, true) => {
            let n = raw
                .n
                .ok_or_else(|| invalid(src, None, "algorithm", "`n` is required for the adversarial schedule"))?;
            bl_adversarial_workload(n).map_err(|e| invalid(src, None, "n", e.to_string()))?
        }
        (None, false) => {
            return Err(CliError::Scenario {
                line: None,
                message: "missing [workload] table".into(),
            })
        }
        (Some(w), _) => workload_from(src, &w, raw.n)?,
    };
    let n = workload.n();
    if raw.n.is_some_and(|m| m != n) {
        return Err(invalid(src, None, "n", format!("n = {} but the workload lists {n} processes", raw.n.unwrap_or(0))));
    }
    if adversarial && workload != bl_adversarial_workload(n).map_err(|e| invalid(src, None, "n", e.to_string()))? {
        return Err(invalid(
            src,
            Some("workload"),
            "sessions",
            "the adversarial schedule needs one single-step invocation per process",
        ));
    }

    let schedule = match schedule_raw {
        RawSchedule::Random { window } => {
            if window.is_some_and(|w| w < n) {
                return Err(invalid(src, Some("schedule"), "window", format!("window must be at least n = {n}")));
            }
            ScheduleSpec::Random { window }
        }
        RawSchedule::RoundRobin => ScheduleSpec::RoundRobin,
        RawSchedule::Scripted { pids } => {
            if let Some(bad) = pids.iter().find(|&&p| p == 0 || p > n) {
                return Err(invalid(src, Some("schedule"), "pids", format!("pid {bad} outside 1..={n}")));
            }
            ScheduleSpec::Scripted(pids.into_iter().map(Pid).collect())
        }
        RawSchedule::BlAdversarial => ScheduleSpec::BlAdversarial,
        RawSchedule::Plan { directives } => ScheduleSpec::Plan(plan_from(src, &directives, n)?),
    };

    let variant = raw.variant.map(|v| BwVariant {
        skip_number_guard: v.skip_number_guard,
        skip_opposite_check: v.skip_opposite_check,
    });
    let initial_color = match kind {
        AlgorithmKind::Bwbgme => Some(raw.initial_color.unwrap_or(Color::White)),
        _ => None,
    };
    let explore = raw.explore.unwrap_or_default();
    Ok(Scenario {
        algorithm: kind,
        n,
        initial_color,
        variant,
        workload,
        schedule,
        monitors: raw.monitors,
        seed: raw.seed.unwrap_or(0),
        step_cap: raw.steps.unwrap_or(DEFAULT_STEP_CAP),
        explore: ExploreLimits {
            max_states: explore.max_states,
            max_depth: explore.max_depth,
            token_ceiling: explore.token_ceiling,
        },
        hash: hex::encode(Sha256::digest(src.as_bytes())),
    })
}

fn line_of_table(src: &str, table: &str) -> Option<usize> {
    let header = format!("[{table}]");
    src.lines()
        .position(|l| l.trim() == header || l.trim_start().starts_with(&format!("{table} =")))
        .map(|i| i + 1)
}

fn workload_from(src: &str, w: &RawWorkload, n: Option<usize>) -> Result<Workload, CliError> {
    let cs_steps = w.cs_steps.unwrap_or(1);
    let table = Some("workload");
    match (&w.sessions, w.template) {
        (Some(_), Some(_)) => Err(invalid(src, table, "template", "give either `sessions` or `template`, not both")),
        (None, None) => Err(CliError::Scenario {
            line: line_of_table(src, "workload"),
            message: "[workload] needs `sessions` or `template`".into(),
        }),
        (Some(sessions), None) => {
            if w.invocations.is_some() {
                return Err(invalid(src, table, "invocations", "`invocations` applies to templates only"));
            }
            Workload::from_sessions(sessions, cs_steps).map_err(|e| invalid(src, table, "sessions", e.to_string()))
        }
        (None, Some(template)) => {
            let n = n.ok_or_else(|| invalid(src, table, "template", "a template needs `n`"))?;
            template
                .build(n, w.invocations.unwrap_or(1), cs_steps)
                .map_err(|e| invalid(src, table, "template", e.to_string()))
        }
    }
}

fn plan_from(src: &str, directives: &[RawDirective], n: usize) -> Result<ScriptPlan, CliError> {
    let mut plan = ScriptPlan::default();
    for (i, d) in directives.iter().enumerate() {
        let bad = |msg: String| invalid(src, Some("schedule"), "directives", format!("directive {i}: {msg}"));
        if d.pid == 0 || d.pid > n {
            return Err(bad(format!("pid {} outside 1..={n}", d.pid)));
        }
        let until = match (d.until, d.steps) {
            (Some(m), None) => Until::from(m),
            (None, Some(k)) => Until::Steps(k),
            _ => return Err(bad("needs exactly one of `until` or `steps`".into())),
        };
        let mut directive = Directive::new(d.pid, until);
        if let Some(limit) = d.limit {
            directive.limit = limit;
        }
        if let Some(required) = d.required {
            directive.required = required;
        }
        plan.push(directive);
    }
    Ok(plan)
}

impl Scenario {
    pub fn algorithm(&self) -> Result<Arc<dyn Algorithm>, CliError> {
        match (self.variant, self.initial_color) {
            (Some(v), Some(color)) => Ok(Arc::new(BwBakery::new(self.n, color, v)?)),
            _ => Ok(build(self.algorithm, self.n, self.initial_color)?),
        }
    }

    pub fn properties(&self) -> Vec<Property> {
        self.monitors
            .clone()
            .unwrap_or_else(|| Property::defaults_for(self.algorithm))
    }

    /// Concrete schedule for `seed`; milestone plans are realized against
    /// a fresh machine.
    pub fn schedule(&self, seed: u64) -> Result<Schedule, CliError> {
        Ok(match &self.schedule {
            ScheduleSpec::Random { window } => Schedule::Random {
                seed,
                window: window.unwrap_or(2 * self.n),
            },
            ScheduleSpec::RoundRobin => Schedule::RoundRobin,
            ScheduleSpec::Scripted(pids) => Schedule::Scripted { pids: pids.clone() },
            ScheduleSpec::BlAdversarial => bl_adversarial_schedule(self.n)?,
            ScheduleSpec::Plan(plan) => {
                let mut m = Machine::new(self.algorithm()?, self.workload.clone())?;
                plan.schedule(&mut m)?
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "version = 1\nalgorithm = \"glb\"\n[workload]\nsessions = [[1], [2]]\n";

    #[test]
    fn minimal_scenario_uses_defaults() {
        let s = parse(MINIMAL).unwrap();
        assert_eq!(s.n, 2);
        assert_eq!(s.seed, 0);
        assert_eq!(s.schedule, ScheduleSpec::Random { window: None });
        assert_eq!(s.properties(), Property::defaults_for(AlgorithmKind::Glb));
        assert_eq!(s.hash.len(), 64);
        assert_eq!(s.schedule(3).unwrap(), Schedule::Random { seed: 3, window: 4 });
    }

    #[test]
    fn syntax_errors_carry_the_line() {
        let err = parse("version = 1\nalgorithm = \"glb\"\n[workload]\nsessions = [[1], \n").unwrap_err();
        assert!(matches!(err, CliError::Scenario { line: Some(l), .. } if l >= 4), "{err}");
        let err = parse("version = 1\nalgorithm = \"xyz\"\n").unwrap_err();
        assert!(matches!(err, CliError::Scenario { line: Some(2), .. }), "{err}");
    }

    #[test]
    fn semantic_errors_carry_the_line() {
        let src = "version = 1\nalgorithm = \"glb\"\ninitial_color = \"black\"\n[workload]\nsessions = [[1]]\n";
        assert!(matches!(parse(src), Err(CliError::Scenario { line: Some(3), .. })));
        let src = "version = 2\nalgorithm = \"glb\"\n[workload]\nsessions = [[1]]\n";
        assert!(matches!(parse(src), Err(CliError::Scenario { line: Some(1), .. })));
        let src = "version = 1\nalgorithm = \"glb\"\nn = 3\n[workload]\nsessions = [[1]]\n";
        assert!(matches!(parse(src), Err(CliError::Scenario { line: Some(3), .. })));
        let src = "version = 1\nalgorithm = \"glb\"\n[workload]\nsessions = [[0]]\n";
        assert!(matches!(parse(src), Err(CliError::Scenario { line: Some(4), .. })));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let src = "version = 1\nalgorithm = \"glb\"\ncolour = 1\n[workload]\nsessions = [[1]]\n";
        assert!(matches!(parse(src), Err(CliError::Scenario { .. })));
    }

    #[test]
    fn adversarial_schedule_supplies_its_workload() {
        let src = "version = 1\nalgorithm = \"bl\"\nn = 4\n[schedule]\nkind = \"bl_adversarial\"\n";
        let s = parse(src).unwrap();
        assert_eq!(s.workload.total(), 4);
        assert!(matches!(s.schedule(0).unwrap(), Schedule::Scripted { .. }));
        let src = "version = 1\nalgorithm = \"glb\"\nn = 4\n[schedule]\nkind = \"bl_adversarial\"\n";
        assert!(matches!(parse(src), Err(CliError::Scenario { line: Some(5), .. })));
    }

    #[test]
    fn plans_and_templates() {
        let src = r#"
version = 1
algorithm = "bwbgme"
n = 3
initial_color = "black"

[workload]
template = "two_sessions"
invocations = 2

[schedule]
kind = "plan"
directives = [
  { pid = 1, until = "doorway_complete" },
  { pid = 2, steps = 3 },
  { pid = 1, until = "exit_complete", limit = 50, required = false },
]
"#;
        let s = parse(src).unwrap();
        assert_eq!(s.initial_color, Some(Color::Black));
        assert_eq!(s.workload.total(), 6);
        let ScheduleSpec::Plan(plan) = &s.schedule else { panic!() };
        assert_eq!(plan.directives.len(), 3);
        assert!(!plan.directives[2].required);
        assert!(matches!(s.schedule(0).unwrap(), Schedule::Scripted { pids } if !pids.is_empty()));
    }
}
