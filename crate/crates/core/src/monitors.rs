//! Online property checkers over trace events, plus per-invocation
//! accounting derived from a finished trace.
//!
//! Each monitor consumes events one at a time and produces a [`Verdict`]
//! when the trace ends. The `check_*` functions run a single monitor over a
//! complete trace.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::SimError;
use crate::machine::{AlgorithmKind, Section};
use crate::memcc::{CellValue, Color, Family, Pid};
use crate::trace::{Access, Marker, Trace, TraceEvent, TraceHeader};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Property {
    MutualExclusion,
    Fcfs,
    BoundedExit,
    ConcurrentEntry,
    FlipInvariant,
    TokenBound,
    Progress,
}

impl Property {
    pub const ALL: [Property; 7] = [
        Property::MutualExclusion,
        Property::Fcfs,
        Property::BoundedExit,
        Property::ConcurrentEntry,
        Property::FlipInvariant,
        Property::TokenBound,
        Property::Progress,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Property::MutualExclusion => "mutual_exclusion",
            Property::Fcfs => "fcfs",
            Property::BoundedExit => "bounded_exit",
            Property::ConcurrentEntry => "concurrent_entry",
            Property::FlipInvariant => "flip_invariant",
            Property::TokenBound => "token_bound",
            Property::Progress => "progress",
        }
    }

    /// Properties an algorithm claims, in report order.
    pub fn defaults_for(kind: AlgorithmKind) -> Vec<Property> {
        match kind {
            AlgorithmKind::Glb => vec![
                Property::MutualExclusion,
                Property::Fcfs,
                Property::BoundedExit,
                Property::ConcurrentEntry,
                Property::Progress,
            ],
            AlgorithmKind::Bwbgme => Property::ALL.to_vec(),
            AlgorithmKind::Bl => vec![
                Property::MutualExclusion,
                Property::BoundedExit,
                Property::Progress,
            ],
        }
    }

    pub fn monitor(self, header: &TraceHeader) -> Box<dyn Monitor> {
        match self {
            Property::MutualExclusion => Box::new(MutualExclusion::new(header)),
            Property::Fcfs => Box::new(Fcfs::new(header)),
            Property::BoundedExit => Box::new(BoundedExit::new(header, exit_bound(header))),
            Property::ConcurrentEntry => Box::new(ConcurrentEntry::new(header)),
            Property::FlipInvariant => Box::new(FlipInvariant::new(header)),
            Property::TokenBound => Box::new(TokenBound::new(header)),
            Property::Progress => Box::new(Progress::new(header)),
        }
    }
}

impl fmt::Display for Property {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Property {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self, SimError> {
        Property::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| SimError::Config(format!("unknown monitor `{s}`")))
    }
}

/// Exit-section step bound claimed by each algorithm.
pub fn exit_bound(header: &TraceHeader) -> usize {
    match header.algorithm {
        AlgorithmKind::Glb => 2,
        AlgorithmKind::Bwbgme => header.n + 2,
        AlgorithmKind::Bl => 1,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Pass,
    Fail,
    Inapplicable,
}

/// Two events that together exhibit a violation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Witness {
    pub steps: (u64, u64),
    pub pids: (Pid, Pid),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub property: Property,
    pub status: Status,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub witness: Option<Witness>,
    pub detail: String,
}

impl Verdict {
    pub fn pass(property: Property, detail: impl Into<String>) -> Self {
        Verdict {
            property,
            status: Status::Pass,
            witness: None,
            detail: detail.into(),
        }
    }

    pub fn fail(property: Property, witness: Option<Witness>, detail: impl Into<String>) -> Self {
        Verdict {
            property,
            status: Status::Fail,
            witness,
            detail: detail.into(),
        }
    }

    pub fn inapplicable(property: Property, detail: impl Into<String>) -> Self {
        Verdict {
            property,
            status: Status::Inapplicable,
            witness: None,
            detail: detail.into(),
        }
    }

    pub fn is_fail(&self) -> bool {
        self.status == Status::Fail
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let status = match self.status {
            Status::Pass => "pass",
            Status::Fail => "FAIL",
            Status::Inapplicable => "n/a",
        };
        write!(f, "{:<17} {:<5} {}", self.property.name(), status, self.detail)?;
        if let Some(w) = self.witness {
            write!(
                f,
                " [{}@{} / {}@{}]",
                w.pids.0, w.steps.0, w.pids.1, w.steps.1
            )?;
        }
        Ok(())
    }
}

pub trait Monitor: Send {
    fn property(&self) -> Property;

    fn observe(&mut self, ev: &TraceEvent);

    /// Verdict once the trace is over. `trace` supplies the stop reason and
    /// deadlock annotation.
    fn finish(&mut self, trace: &Trace) -> Verdict;
}

/// The monitors attached to one run.
pub struct MonitorSet {
    monitors: Vec<Box<dyn Monitor>>,
}

impl MonitorSet {
    pub fn new(header: &TraceHeader, properties: &[Property]) -> Self {
        let mut seen = Vec::new();
        for p in properties {
            if !seen.contains(p) {
                seen.push(*p);
            }
        }
        MonitorSet {
            monitors: seen.into_iter().map(|p| p.monitor(header)).collect(),
        }
    }

    pub fn defaults(header: &TraceHeader) -> Self {
        Self::new(header, &Property::defaults_for(header.algorithm))
    }

    pub fn empty() -> Self {
        MonitorSet {
            monitors: Vec::new(),
        }
    }

    pub fn properties(&self) -> Vec<Property> {
        self.monitors.iter().map(|m| m.property()).collect()
    }

    pub fn observe(&mut self, ev: &TraceEvent) {
        for m in &mut self.monitors {
            m.observe(ev);
        }
    }

    pub fn finish(&mut self, trace: &Trace) -> Vec<Verdict> {
        self.monitors.iter_mut().map(|m| m.finish(trace)).collect()
    }
}

fn check(property: Property, trace: &Trace) -> Verdict {
    let mut m = property.monitor(&trace.header);
    for ev in &trace.events {
        m.observe(ev);
    }
    m.finish(trace)
}

pub fn check_mutual_exclusion(trace: &Trace) -> Verdict {
    check(Property::MutualExclusion, trace)
}

pub fn check_fcfs(trace: &Trace) -> Verdict {
    check(Property::Fcfs, trace)
}

/// Bounded exit with an explicit bound on exit-section steps.
pub fn check_bounded_exit(trace: &Trace, bound: impl Fn(usize) -> usize) -> Verdict {
    let mut m = BoundedExit::new(&trace.header, bound(trace.header.n));
    for ev in &trace.events {
        m.observe(ev);
    }
    m.finish(trace)
}

pub fn check_concurrent_entry(trace: &Trace) -> Verdict {
    check(Property::ConcurrentEntry, trace)
}

pub fn check_flip_invariant(trace: &Trace) -> Verdict {
    check(Property::FlipInvariant, trace)
}

pub fn check_token_bound(trace: &Trace) -> Verdict {
    check(Property::TokenBound, trace)
}

pub fn check_progress(trace: &Trace) -> Verdict {
    check(Property::Progress, trace)
}

/// Runs every listed property over a finished trace.
pub fn check_all(trace: &Trace, properties: &[Property]) -> Vec<Verdict> {
    properties.iter().map(|p| check(*p, trace)).collect()
}

struct MutualExclusion {
    /// Per process: `(cs-enter step, session)` while inside.
    inside: Vec<Option<(u64, u64)>>,
    first: Option<Witness>,
    violations: u64,
}

impl MutualExclusion {
    fn new(header: &TraceHeader) -> Self {
        MutualExclusion {
            inside: vec![None; header.n],
            first: None,
            violations: 0,
        }
    }
}

impl Monitor for MutualExclusion {
    fn property(&self) -> Property {
        Property::MutualExclusion
    }

    fn observe(&mut self, ev: &TraceEvent) {
        if ev.markers.contains(Marker::CsEnter) {
            for (q, slot) in self.inside.iter().enumerate() {
                if let Some((at, session)) = *slot {
                    if session != ev.session {
                        self.violations += 1;
                        self.first.get_or_insert(Witness {
                            steps: (at, ev.step),
                            pids: (Pid::from_index(q), ev.pid),
                        });
                    }
                }
            }
            self.inside[ev.pid.index()] = Some((ev.step, ev.session));
        }
        if ev.markers.contains(Marker::CsExit) {
            self.inside[ev.pid.index()] = None;
        }
    }

    fn finish(&mut self, _: &Trace) -> Verdict {
        match self.first {
            None => Verdict::pass(self.property(), "no conflicting overlap in the critical section"),
            Some(w) => Verdict::fail(
                self.property(),
                Some(w),
                format!(
                    "{} conflicting critical-section overlap(s)",
                    self.violations
                ),
            ),
        }
    }
}

#[derive(Clone, Default)]
struct FcfsSlot {
    session: u64,
    doorway_done: Option<u64>,
    entered: bool,
    /// Conflicting processes that completed their doorway before this one
    /// started its own and have not yet entered.
    ahead: Vec<usize>,
}

struct Fcfs {
    procs: Vec<FcfsSlot>,
    first: Option<Witness>,
    violations: u64,
}

impl Fcfs {
    fn new(header: &TraceHeader) -> Self {
        Fcfs {
            procs: vec![FcfsSlot::default(); header.n],
            first: None,
            violations: 0,
        }
    }
}

impl Monitor for Fcfs {
    fn property(&self) -> Property {
        Property::Fcfs
    }

    fn observe(&mut self, ev: &TraceEvent) {
        let me = ev.pid.index();
        if ev.markers.contains(Marker::DoorwayStart) {
            let ahead = self
                .procs
                .iter()
                .enumerate()
                .filter(|(q, s)| {
                    *q != me && s.doorway_done.is_some() && !s.entered && s.session != ev.session
                })
                .map(|(q, _)| q)
                .collect();
            self.procs[me] = FcfsSlot {
                session: ev.session,
                doorway_done: None,
                entered: false,
                ahead,
            };
        }
        if ev.markers.contains(Marker::DoorwayComplete) {
            self.procs[me].doorway_done = Some(ev.step);
        }
        if ev.markers.contains(Marker::CsEnter) {
            if let Some(&q) = self.procs[me].ahead.first() {
                self.violations += 1;
                self.first.get_or_insert(Witness {
                    steps: (self.procs[q].doorway_done.unwrap_or(0), ev.step),
                    pids: (Pid::from_index(q), ev.pid),
                });
            }
            self.procs[me].entered = true;
            for s in &mut self.procs {
                s.ahead.retain(|&q| q != me);
            }
        }
    }

    fn finish(&mut self, _: &Trace) -> Verdict {
        match self.first {
            None => Verdict::pass(self.property(), "no conflicting overtaking of a completed doorway"),
            Some(w) => Verdict::fail(
                self.property(),
                Some(w),
                format!("{} entry(ies) overtook an earlier conflicting doorway", self.violations),
            ),
        }
    }
}

struct BoundedExit {
    bound: usize,
    /// Per process: `(cs-exit step, exit steps so far)` while exiting.
    open: Vec<Option<(u64, usize)>>,
    worst: usize,
    first: Option<Witness>,
}

impl BoundedExit {
    fn new(header: &TraceHeader, bound: usize) -> Self {
        BoundedExit {
            bound,
            open: vec![None; header.n],
            worst: 0,
            first: None,
        }
    }
}

impl Monitor for BoundedExit {
    fn property(&self) -> Property {
        Property::BoundedExit
    }

    fn observe(&mut self, ev: &TraceEvent) {
        let me = ev.pid.index();
        if ev.markers.contains(Marker::CsExit) {
            self.open[me] = Some((ev.step, 0));
            return;
        }
        if ev.section != Section::Exit {
            return;
        }
        if let Some((start, count)) = &mut self.open[me] {
            *count += 1;
            self.worst = self.worst.max(*count);
            if *count > self.bound {
                self.first.get_or_insert(Witness {
                    steps: (*start, ev.step),
                    pids: (ev.pid, ev.pid),
                });
            }
        }
        if ev.markers.contains(Marker::ExitComplete) {
            self.open[me] = None;
        }
    }

    fn finish(&mut self, _: &Trace) -> Verdict {
        let detail = format!("max {} exit step(s), bound {}", self.worst, self.bound);
        match self.first {
            None => Verdict::pass(self.property(), detail),
            Some(w) => Verdict::fail(self.property(), Some(w), detail),
        }
    }
}

struct ConcurrentEntry {
    applicable: bool,
    /// Own steps in the entry section of the invocation in progress.
    steps: Vec<u64>,
    worst: u64,
    false_waits: u64,
    first: Option<Witness>,
}

impl ConcurrentEntry {
    fn new(header: &TraceHeader) -> Self {
        ConcurrentEntry {
            applicable: header.workload.distinct_sessions().len() <= 1,
            steps: vec![0; header.n],
            worst: 0,
            false_waits: 0,
            first: None,
        }
    }
}

impl Monitor for ConcurrentEntry {
    fn property(&self) -> Property {
        Property::ConcurrentEntry
    }

    fn observe(&mut self, ev: &TraceEvent) {
        if !matches!(ev.section, Section::Doorway | Section::Waiting) {
            return;
        }
        let me = ev.pid.index();
        if ev.markers.contains(Marker::DoorwayStart) {
            self.steps[me] = 0;
        }
        self.steps[me] += 1;
        self.worst = self.worst.max(self.steps[me]);
        if ev.wait_false {
            self.false_waits += 1;
            self.first.get_or_insert(Witness {
                steps: (ev.step, ev.step),
                pids: (ev.pid, ev.target.map_or(ev.pid, Pid)),
            });
        }
    }

    fn finish(&mut self, _: &Trace) -> Verdict {
        if !self.applicable {
            return Verdict::inapplicable(self.property(), "workload uses more than one session");
        }
        match self.first {
            None => Verdict::pass(
                self.property(),
                format!("no false wait; max {} entry step(s)", self.worst),
            ),
            Some(w) => Verdict::fail(
                self.property(),
                Some(w),
                format!("{} false wait evaluation(s) without conflict", self.false_waits),
            ),
        }
    }
}

/// One change of the global color.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Flip {
    pub step: u64,
    pub pid: Pid,
    pub to: Color,
}

struct FlipInvariant {
    applicable: bool,
    color: Option<Color>,
    /// Per process: flips seen since its color read, while the window is open.
    windows: Vec<Option<Vec<Flip>>>,
    history: Vec<Flip>,
    first: Option<Witness>,
    worst: usize,
}

impl FlipInvariant {
    fn new(header: &TraceHeader) -> Self {
        FlipInvariant {
            applicable: header.algorithm == AlgorithmKind::Bwbgme,
            color: header.initial_color,
            windows: vec![None; header.n],
            history: Vec::new(),
            first: None,
            worst: 0,
        }
    }
}

impl Monitor for FlipInvariant {
    fn property(&self) -> Property {
        Property::FlipInvariant
    }

    fn observe(&mut self, ev: &TraceEvent) {
        if !self.applicable {
            return;
        }
        match ev.access {
            Access::Read { reg, .. } if reg.family == Family::GlobalColor && ev.section == Section::Doorway => {
                self.windows[ev.pid.index()] = Some(Vec::new());
            }
            Access::Write {
                reg,
                value: CellValue::Color(to),
            } if reg.family == Family::GlobalColor && self.color != Some(to) => {
                self.color = Some(to);
                let flip = Flip {
                    step: ev.step,
                    pid: ev.pid,
                    to,
                };
                self.history.push(flip);
                for (q, w) in self.windows.iter_mut().enumerate() {
                    if let Some(flips) = w {
                        flips.push(flip);
                        self.worst = self.worst.max(flips.len());
                        if flips.len() >= 2 {
                            self.first.get_or_insert(Witness {
                                steps: (flips[0].step, flip.step),
                                pids: (Pid::from_index(q), flip.pid),
                            });
                        }
                    }
                }
            }
            _ => {}
        }
        if ev.markers.contains(Marker::ExitComplete) {
            self.windows[ev.pid.index()] = None;
        }
    }

    fn finish(&mut self, _: &Trace) -> Verdict {
        if !self.applicable {
            return Verdict::inapplicable(self.property(), "only defined for the black-and-white bakery");
        }
        let detail = format!(
            "{} flip(s) in total, at most {} inside one window",
            self.history.len(),
            self.worst
        );
        match self.first {
            None => Verdict::pass(self.property(), detail),
            Some(w) => Verdict::fail(self.property(), Some(w), detail),
        }
    }
}

struct TokenBound {
    applicable: bool,
    limit: u64,
    max: u64,
    first: Option<Witness>,
}

impl TokenBound {
    fn new(header: &TraceHeader) -> Self {
        TokenBound {
            applicable: header.algorithm == AlgorithmKind::Bwbgme,
            limit: header.n as u64 + 1,
            max: 0,
            first: None,
        }
    }
}

impl Monitor for TokenBound {
    fn property(&self) -> Property {
        Property::TokenBound
    }

    fn observe(&mut self, ev: &TraceEvent) {
        if let Access::Write {
            reg,
            value: CellValue::Triple(t),
        } = ev.access
        {
            if reg.family == Family::Token {
                self.max = self.max.max(t.number);
                if t.number > self.limit {
                    self.first.get_or_insert(Witness {
                        steps: (ev.step, ev.step),
                        pids: (ev.pid, ev.pid),
                    });
                }
            }
        }
    }

    fn finish(&mut self, _: &Trace) -> Verdict {
        if !self.applicable {
            return Verdict::inapplicable(self.property(), "only defined for bounded tokens");
        }
        let detail = format!("max token number {}, bound {}", self.max, self.limit);
        match self.first {
            None => Verdict::pass(self.property(), detail),
            Some(w) => Verdict::fail(self.property(), Some(w), detail),
        }
    }
}

#[derive(Clone, Copy)]
struct Pending {
    doorway_done: u64,
    entered: bool,
}

struct Progress {
    current: Vec<Option<Pending>>,
    /// `(pid, doorway-start step)` of every completed invocation.
    completed: Vec<(Pid, u64)>,
    starts: Vec<u64>,
    last_step: Vec<u64>,
}

impl Progress {
    fn new(header: &TraceHeader) -> Self {
        Progress {
            current: vec![None; header.n],
            completed: Vec::new(),
            starts: vec![0; header.n],
            last_step: vec![0; header.n],
        }
    }
}

impl Monitor for Progress {
    fn property(&self) -> Property {
        Property::Progress
    }

    fn observe(&mut self, ev: &TraceEvent) {
        let me = ev.pid.index();
        if ev.noop {
            return;
        }
        self.last_step[me] = ev.step;
        if ev.markers.contains(Marker::DoorwayStart) {
            self.starts[me] = ev.step;
            self.current[me] = None;
        }
        if ev.markers.contains(Marker::DoorwayComplete) {
            self.current[me] = Some(Pending {
                doorway_done: ev.step,
                entered: false,
            });
        }
        if ev.markers.contains(Marker::CsEnter) {
            if let Some(p) = &mut self.current[me] {
                p.entered = true;
            }
        }
        if ev.markers.contains(Marker::ExitComplete) {
            self.current[me] = None;
            self.completed.push((ev.pid, self.starts[me]));
        }
    }

    fn finish(&mut self, trace: &Trace) -> Verdict {
        if let Some(at) = trace.deadlock_at {
            let stuck = self
                .current
                .iter()
                .position(|c| c.is_some_and(|p| !p.entered))
                .map_or(Pid(1), Pid::from_index);
            return Verdict::fail(
                self.property(),
                Some(Witness {
                    steps: (at, at),
                    pids: (stuck, stuck),
                }),
                format!("deadlock: every unfinished process blocked after step {at}"),
            );
        }
        for (q, c) in self.current.iter().enumerate() {
            let Some(p) = c else { continue };
            if p.entered {
                continue;
            }
            let me = Pid::from_index(q);
            let overtakers: Vec<_> = self
                .completed
                .iter()
                .filter(|(other, start)| *other != me && *start > p.doorway_done)
                .collect();
            if overtakers.len() >= 2 {
                return Verdict::fail(
                    self.property(),
                    Some(Witness {
                        steps: (p.doorway_done, self.last_step[q]),
                        pids: (me, overtakers[0].0),
                    }),
                    format!(
                        "{me} never entered while {} later invocation(s) completed",
                        overtakers.len()
                    ),
                );
            }
        }
        Verdict::pass(
            self.property(),
            format!("{} invocation(s) completed, no deadlock", self.completed.len()),
        )
    }
}

/// RMR split of one invocation by section. The critical section has no
/// shared accesses.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SectionRmr {
    pub doorway: u64,
    pub waiting: u64,
    pub exit: u64,
}

impl SectionRmr {
    pub fn total(&self) -> u64 {
        self.doorway + self.waiting + self.exit
    }
}

/// Everything observed about one invocation.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct InvocationRecord {
    pub pid: Pid,
    pub ordinal: u32,
    pub session: u64,
    pub doorway_start: Option<u64>,
    pub doorway_complete: Option<u64>,
    pub cs_enter: Option<u64>,
    pub cs_exit: Option<u64>,
    pub exit_complete: Option<u64>,
    pub rmr: SectionRmr,
    pub doorway_steps: u64,
    pub entry_steps: u64,
    pub exit_steps: u64,
    pub exit_accesses: u64,
    pub exit_writes: u64,
    pub false_waits: u64,
    /// Last value the process wrote to its own token before entering.
    pub token: Option<CellValue>,
}

impl InvocationRecord {
    fn started(pid: Pid, ordinal: u32, session: u64, step: u64) -> Self {
        InvocationRecord {
            pid,
            ordinal,
            session,
            doorway_start: Some(step),
            doorway_complete: None,
            cs_enter: None,
            cs_exit: None,
            exit_complete: None,
            rmr: SectionRmr::default(),
            doorway_steps: 0,
            entry_steps: 0,
            exit_steps: 0,
            exit_accesses: 0,
            exit_writes: 0,
            false_waits: 0,
            token: None,
        }
    }

    /// Marker steps in section order, for the ones present.
    pub fn milestones(&self) -> Vec<u64> {
        [
            self.doorway_start,
            self.doorway_complete,
            self.cs_enter,
            self.cs_exit,
            self.exit_complete,
        ]
        .into_iter()
        .flatten()
        .collect()
    }

    pub fn token_number(&self) -> Option<u64> {
        match self.token? {
            CellValue::Int(v) => Some(v),
            CellValue::Triple(t) => Some(t.number),
            _ => None,
        }
    }
}

pub fn invocation_records(trace: &Trace) -> Vec<InvocationRecord> {
    let mut records: Vec<InvocationRecord> = Vec::new();
    let mut current: Vec<Option<usize>> = vec![None; trace.header.n];
    for ev in trace.events.iter().filter(|e| !e.noop) {
        let me = ev.pid.index();
        if ev.markers.contains(Marker::DoorwayStart) {
            current[me] = Some(records.len());
            records.push(InvocationRecord::started(
                ev.pid,
                ev.invocation,
                ev.session,
                ev.step,
            ));
        }
        let Some(idx) = current[me] else { continue };
        let r = &mut records[idx];
        let rmr = u64::from(ev.rmr);
        match ev.section {
            Section::Doorway => {
                r.rmr.doorway += rmr;
                r.doorway_steps += 1;
                r.entry_steps += 1;
            }
            Section::Waiting => {
                r.rmr.waiting += rmr;
                r.entry_steps += 1;
            }
            Section::Exit => {
                r.rmr.exit += rmr;
                r.exit_steps += 1;
                r.exit_accesses += u64::from(ev.access.is_shared());
                r.exit_writes += u64::from(ev.access.is_write());
            }
            Section::Cs | Section::Remainder => {}
        }
        if ev.wait_false && matches!(ev.section, Section::Doorway | Section::Waiting) {
            r.false_waits += 1;
        }
        if r.cs_enter.is_none() {
            if let Access::Write { reg, value } = ev.access {
                if reg.family == Family::Token && reg.index == Some(ev.pid.get()) {
                    r.token = Some(value);
                }
            }
        }
        for m in ev.markers.iter() {
            let slot = match m {
                Marker::DoorwayStart => continue,
                Marker::DoorwayComplete => &mut r.doorway_complete,
                Marker::CsEnter => &mut r.cs_enter,
                Marker::CsExit => &mut r.cs_exit,
                Marker::ExitComplete => &mut r.exit_complete,
            };
            *slot = Some(ev.step);
        }
        if ev.markers.contains(Marker::ExitComplete) {
            current[me] = None;
        }
    }
    records
}

/// Min, mean and max of one per-invocation quantity.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub min: u64,
    pub mean: f64,
    pub max: u64,
}

impl Stat {
    pub fn of(values: impl IntoIterator<Item = u64>) -> Stat {
        let mut n = 0u64;
        let mut sum = 0u64;
        let mut min = u64::MAX;
        let mut max = 0;
        for v in values {
            n += 1;
            sum += v;
            min = min.min(v);
            max = max.max(v);
        }
        if n == 0 {
            return Stat::default();
        }
        Stat {
            min,
            mean: sum as f64 / n as f64,
            max,
        }
    }
}

/// Per-invocation RMR statistics over completed invocations.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RmrReport {
    pub invocations: usize,
    pub doorway: Stat,
    pub waiting: Stat,
    pub exit: Stat,
    pub total: Stat,
    pub per_process: Vec<u64>,
    pub grand_total: u64,
}

impl RmrReport {
    pub fn from_trace(trace: &Trace) -> Self {
        let records = invocation_records(trace);
        let done: Vec<_> = records
            .iter()
            .filter(|r| r.exit_complete.is_some())
            .collect();
        let mut per_process = vec![0; trace.header.n];
        for ev in trace.events.iter().filter(|e| e.rmr) {
            per_process[ev.pid.index()] += 1;
        }
        RmrReport {
            invocations: done.len(),
            doorway: Stat::of(done.iter().map(|r| r.rmr.doorway)),
            waiting: Stat::of(done.iter().map(|r| r.rmr.waiting)),
            exit: Stat::of(done.iter().map(|r| r.rmr.exit)),
            total: Stat::of(done.iter().map(|r| r.rmr.total())),
            grand_total: per_process.iter().sum(),
            per_process,
        }
    }
}

/// RMR spent on one uninterrupted visit of a line for a fixed loop index,
/// from arrival until the process moves on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct LinePass {
    pub pid: Pid,
    pub invocation: u32,
    pub line: u8,
    pub target: usize,
    pub rmr: u64,
    pub evaluations_failed: u64,
}

/// Every pass through any of `lines`, in trace order of arrival.
pub fn line_passes(trace: &Trace, lines: &[u8]) -> Vec<LinePass> {
    let mut out: Vec<LinePass> = Vec::new();
    let mut open: BTreeMap<Pid, usize> = BTreeMap::new();
    for ev in trace.events.iter().filter(|e| !e.noop) {
        let relevant = lines.contains(&ev.line) && ev.target.is_some();
        let continuing = open.get(&ev.pid).is_some_and(|&i| {
            let p = &out[i];
            relevant && p.line == ev.line && Some(p.target) == ev.target && p.invocation == ev.invocation
        });
        if !continuing {
            open.remove(&ev.pid);
            if relevant {
                open.insert(ev.pid, out.len());
                out.push(LinePass {
                    pid: ev.pid,
                    invocation: ev.invocation,
                    line: ev.line,
                    target: ev.target.unwrap_or(0),
                    rmr: 0,
                    evaluations_failed: 0,
                });
            }
        }
        if let Some(&i) = open.get(&ev.pid) {
            out[i].rmr += u64::from(ev.rmr);
            out[i].evaluations_failed += u64::from(ev.wait_false);
        }
    }
    out
}
