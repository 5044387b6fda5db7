//! Process state machines, the per-step execution engine and the run loop.
//!
//! Every step performs at most one shared access. A multi-variable wait
//! condition is evaluated as a sequence of steps, one register read each,
//! left to right with short-circuiting; when the whole condition comes out
//! false the process returns to the start of the same line.

use std::collections::BTreeSet;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};
use crate::memcc::{CellValue, Color, Memory, Pid, RegisterId, Token};
use crate::monitors::MonitorSet;
use crate::sched::Scheduler;
use crate::trace::{Access, Marker, Markers, StopReason, Trace, TraceEvent, TraceHeader};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AlgorithmKind {
    Glb,
    Bwbgme,
    Bl,
}

impl AlgorithmKind {
    pub fn name(self) -> &'static str {
        match self {
            AlgorithmKind::Glb => "glb",
            AlgorithmKind::Bwbgme => "bwbgme",
            AlgorithmKind::Bl => "bl",
        }
    }
}

impl fmt::Display for AlgorithmKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for AlgorithmKind {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "glb" => Ok(AlgorithmKind::Glb),
            "bwbgme" => Ok(AlgorithmKind::Bwbgme),
            "bl" => Ok(AlgorithmKind::Bl),
            other => Err(SimError::Config(format!("unknown algorithm `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Section {
    Remainder,
    Doorway,
    Waiting,
    Cs,
    Exit,
}

/// Program counter: pseudocode line plus the position inside a multi-read
/// condition on that line.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Pc {
    pub line: u8,
    pub phase: u8,
}

impl Pc {
    pub const fn at(line: u8) -> Self {
        Pc { line, phase: 0 }
    }
}

/// Private variables of one process.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct LocalEnv {
    pub pc: Pc,
    /// Loop index of the `for j` loop in progress.
    pub j: usize,
    pub mysession: u64,
    pub mycolor: Color,
    pub mynumber: u64,
    /// Last token read for the `j` in progress.
    pub other: Token,
    pub cs_left: u32,
}

impl LocalEnv {
    fn idle(pc: Pc) -> Self {
        LocalEnv {
            pc,
            j: 0,
            mysession: 0,
            mycolor: Color::White,
            mynumber: 0,
            other: Token::EMPTY,
            cs_left: 0,
        }
    }

    pub fn goto(&mut self, line: u8) {
        self.pc = Pc::at(line);
    }
}

/// One request to enter the critical section.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Invocation {
    pub session: u64,
    /// Local steps spent inside the critical section, at least one.
    pub cs_steps: u32,
}

/// Per-process lists of invocations, performed in order.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Workload {
    procs: Vec<Vec<Invocation>>,
}

impl Workload {
    pub fn new(procs: Vec<Vec<Invocation>>) -> Result<Self> {
        if procs.is_empty() {
            return Err(SimError::Config("workload needs at least one process".into()));
        }
        for (i, list) in procs.iter().enumerate() {
            for inv in list {
                if inv.session == 0 {
                    return Err(SimError::Config(format!(
                        "P{}: session 0 is reserved for \"no session\"",
                        i + 1
                    )));
                }
                if inv.cs_steps == 0 {
                    return Err(SimError::Config(format!(
                        "P{}: cs_steps must be at least 1",
                        i + 1
                    )));
                }
            }
        }
        Ok(Workload { procs })
    }

    pub fn from_sessions(sessions: &[Vec<u64>], cs_steps: u32) -> Result<Self> {
        Self::new(
            sessions
                .iter()
                .map(|l| {
                    l.iter()
                        .map(|&session| Invocation { session, cs_steps })
                        .collect()
                })
                .collect(),
        )
    }

    /// `invocations` requests per process with sessions chosen by `session_of`.
    pub fn uniform(
        n: usize,
        invocations: usize,
        cs_steps: u32,
        session_of: impl Fn(Pid, usize) -> u64,
    ) -> Result<Self> {
        let sessions: Vec<Vec<u64>> = Pid::all(n)
            .map(|p| (0..invocations).map(|k| session_of(p, k)).collect())
            .collect();
        Self::from_sessions(&sessions, cs_steps)
    }

    pub fn n(&self) -> usize {
        self.procs.len()
    }

    pub fn get(&self, pid: Pid, k: usize) -> Option<&Invocation> {
        self.procs.get(pid.index())?.get(k)
    }

    pub fn len_of(&self, pid: Pid) -> usize {
        self.procs.get(pid.index()).map_or(0, Vec::len)
    }

    pub fn total(&self) -> usize {
        self.procs.iter().map(Vec::len).sum()
    }

    pub fn distinct_sessions(&self) -> BTreeSet<u64> {
        self.procs.iter().flatten().map(|i| i.session).collect()
    }

    pub fn lists(&self) -> &[Vec<Invocation>] {
        &self.procs
    }
}

/// What a step did to the process's section.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Flow {
    Stay,
    DoorwayDone,
    EnterCs,
    ExitDone,
}

/// Result of executing one step of an algorithm.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Outcome {
    pub line: u8,
    pub target: Option<usize>,
    pub flow: Flow,
    pub wait_false: bool,
}

impl Outcome {
    pub fn at(line: u8) -> Self {
        Outcome {
            line,
            target: None,
            flow: Flow::Stay,
            wait_false: false,
        }
    }

    pub fn on(line: u8, j: usize) -> Self {
        Outcome {
            target: Some(j),
            ..Self::at(line)
        }
    }

    pub fn flow(mut self, flow: Flow) -> Self {
        self.flow = flow;
        self
    }

    pub fn waiting(mut self) -> Self {
        self.wait_false = true;
        self
    }
}

/// Shared-memory port handed to an algorithm for a single step. Rejects a
/// second access.
pub struct Bus<'a> {
    mem: &'a mut Memory,
    pid: Pid,
    access: Access,
    rmr: bool,
}

impl<'a> Bus<'a> {
    pub fn new(mem: &'a mut Memory, pid: Pid) -> Self {
        Bus {
            mem,
            pid,
            access: Access::Local,
            rmr: false,
        }
    }

    fn claim(&self, reg: RegisterId) -> Result<()> {
        if self.access.is_shared() {
            return Err(SimError::DoubleAccess(reg));
        }
        Ok(())
    }

    pub fn read(&mut self, reg: RegisterId) -> Result<CellValue> {
        self.claim(reg)?;
        let (value, rmr) = self.mem.read(self.pid, reg)?;
        self.access = Access::Read { reg, value };
        self.rmr = rmr;
        Ok(value)
    }

    pub fn write(&mut self, reg: RegisterId, value: CellValue) -> Result<()> {
        self.claim(reg)?;
        self.mem.write(self.pid, reg, value)?;
        self.access = Access::Write { reg, value };
        self.rmr = true;
        Ok(())
    }

    fn mismatch(reg: RegisterId, expected: &'static str, v: CellValue) -> SimError {
        SimError::KindMismatch {
            reg,
            expected,
            found: v.kind_name(),
        }
    }

    pub fn read_int(&mut self, reg: RegisterId) -> Result<u64> {
        let v = self.read(reg)?;
        v.as_int().ok_or_else(|| Self::mismatch(reg, "int", v))
    }

    pub fn read_bool(&mut self, reg: RegisterId) -> Result<bool> {
        let v = self.read(reg)?;
        v.as_bool().ok_or_else(|| Self::mismatch(reg, "bool", v))
    }

    pub fn read_color(&mut self, reg: RegisterId) -> Result<Color> {
        let v = self.read(reg)?;
        v.as_color().ok_or_else(|| Self::mismatch(reg, "color", v))
    }

    pub fn read_token(&mut self, reg: RegisterId) -> Result<Token> {
        let v = self.read(reg)?;
        v.as_token().ok_or_else(|| Self::mismatch(reg, "triple", v))
    }

    pub fn into_access(self) -> (Access, bool) {
        (self.access, self.rmr)
    }
}

/// A mutual-exclusion algorithm expressed as a per-process step function.
pub trait Algorithm: fmt::Debug + Send + Sync {
    fn kind(&self) -> AlgorithmKind;

    fn n(&self) -> usize;

    /// Shared registers and their initial values.
    fn declarations(&self) -> Vec<(RegisterId, CellValue)>;

    fn initial_color(&self) -> Option<Color> {
        None
    }

    fn section(&self, pc: Pc) -> Section;

    fn is_wait_line(&self, line: u8) -> bool;

    fn remainder_pc(&self) -> Pc;

    /// First doorway line.
    fn entry_pc(&self) -> Pc;

    fn cs_pc(&self) -> Pc;

    /// Line taken after the last critical-section step.
    fn exit_pc(&self) -> Pc;

    /// Executes the line at `env.pc` for `pid`, including any local
    /// bookkeeping that precedes the next shared access.
    fn execute(&self, pid: Pid, env: &mut LocalEnv, bus: &mut Bus<'_>) -> Result<Outcome>;

    /// Upper bound on shared accesses in one exit section.
    fn exit_access_bound(&self) -> usize;
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Process {
    pub env: LocalEnv,
    /// Invocations started so far.
    pub started: u32,
}

/// Global memory plus every process's private state.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SystemState {
    pub mem: Memory,
    pub procs: Vec<Process>,
}

impl SystemState {
    pub fn initial(algo: &dyn Algorithm) -> Result<Self> {
        let mem = Memory::from_declarations(algo.n(), algo.declarations())?;
        let procs = (0..algo.n())
            .map(|_| Process {
                env: LocalEnv::idle(algo.remainder_pc()),
                started: 0,
            })
            .collect();
        Ok(SystemState { mem, procs })
    }

    pub fn proc(&self, pid: Pid) -> &Process {
        &self.procs[pid.index()]
    }

    pub fn section_of(&self, algo: &dyn Algorithm, pid: Pid) -> Section {
        algo.section(self.proc(pid).env.pc)
    }

    /// In the remainder with no invocation left.
    pub fn is_finished(&self, algo: &dyn Algorithm, workload: &Workload, pid: Pid) -> bool {
        let p = self.proc(pid);
        algo.section(p.env.pc) == Section::Remainder
            && p.started as usize >= workload.len_of(pid)
    }

    /// Executes one step of `pid`.
    pub fn step(
        &mut self,
        algo: &dyn Algorithm,
        workload: &Workload,
        pid: Pid,
        step: u64,
    ) -> Result<TraceEvent> {
        let n = algo.n();
        if pid.0 == 0 || pid.0 > n {
            return Err(SimError::InvalidPid(pid.0, n));
        }
        let p = &mut self.procs[pid.index()];
        let mut markers = Markers::default();
        let current = |p: &Process| p.started.saturating_sub(1);

        match algo.section(p.env.pc) {
            Section::Remainder => {
                let Some(inv) = workload.get(pid, p.started as usize) else {
                    return Ok(TraceEvent {
                        step,
                        pid,
                        line: p.env.pc.line,
                        target: None,
                        access: Access::Local,
                        rmr: false,
                        section: Section::Remainder,
                        markers,
                        session: 0,
                        invocation: current(p),
                        wait_false: false,
                        noop: true,
                    });
                };
                p.env = LocalEnv::idle(algo.entry_pc());
                p.env.mysession = inv.session;
                p.started += 1;
                markers.insert(Marker::DoorwayStart);
            }
            Section::Cs => {
                let line = p.env.pc.line;
                p.env.cs_left = p.env.cs_left.saturating_sub(1);
                if p.env.cs_left == 0 {
                    p.env.pc = algo.exit_pc();
                    markers.insert(Marker::CsExit);
                }
                return Ok(TraceEvent {
                    step,
                    pid,
                    line,
                    target: None,
                    access: Access::Local,
                    rmr: false,
                    section: Section::Cs,
                    markers,
                    session: p.env.mysession,
                    invocation: current(p),
                    wait_false: false,
                    noop: false,
                });
            }
            _ => {}
        }

        let section = algo.section(p.env.pc);
        let mut bus = Bus::new(&mut self.mem, pid);
        let out = algo.execute(pid, &mut p.env, &mut bus)?;
        let (access, rmr) = bus.into_access();
        let session = p.env.mysession;
        match out.flow {
            Flow::Stay => {}
            Flow::DoorwayDone => markers.insert(Marker::DoorwayComplete),
            Flow::EnterCs => {
                markers.insert(Marker::CsEnter);
                p.env.pc = algo.cs_pc();
                p.env.cs_left = workload
                    .get(pid, current(p) as usize)
                    .map_or(1, |inv| inv.cs_steps);
            }
            Flow::ExitDone => {
                markers.insert(Marker::ExitComplete);
                p.env.pc = algo.remainder_pc();
                p.env.mysession = 0;
            }
        }
        Ok(TraceEvent {
            step,
            pid,
            line: out.line,
            target: out.target,
            access,
            rmr,
            section,
            markers,
            session,
            invocation: current(p),
            wait_false: out.wait_false,
            noop: false,
        })
    }

    /// Whether `pid` is spinning on a condition that stays false as long
    /// as no other process writes: solo steps from here reach a complete
    /// fresh evaluation that fails without leaving the line.
    pub fn effectively_blocked(&self, algo: &dyn Algorithm, workload: &Workload, pid: Pid) -> bool {
        let start = self.proc(pid).env;
        if !algo.is_wait_line(start.pc.line) {
            return false;
        }
        let mut probe = self.clone();
        // An evaluation that began mid-condition may mix older values, so
        // only one started from its first read counts.
        let mut fresh = false;
        // A full evaluation of the longest condition takes a handful of
        // reads; anything beyond this means the process is moving.
        for _ in 0..16 {
            if probe.proc(pid).env.pc.phase == 0 {
                fresh = true;
            }
            let Ok(ev) = probe.step(algo, workload, pid, 0) else {
                return false;
            };
            let now = probe.proc(pid).env;
            if ev.access.is_write() || now.pc.line != start.pc.line || now.j != start.j {
                return false;
            }
            if ev.wait_false && fresh {
                return true;
            }
        }
        false
    }

    /// Every unfinished process is effectively blocked and at least one
    /// process is unfinished.
    pub fn deadlocked(&self, algo: &dyn Algorithm, workload: &Workload) -> bool {
        let mut any = false;
        for pid in Pid::all(algo.n()) {
            if self.is_finished(algo, workload, pid) {
                continue;
            }
            if !algo.is_wait_line(self.proc(pid).env.pc.line) {
                return false;
            }
            any = true;
        }
        any && Pid::all(algo.n())
            .filter(|&p| !self.is_finished(algo, workload, p))
            .all(|p| self.effectively_blocked(algo, workload, p))
    }
}

/// An algorithm, a workload and the evolving system state.
#[derive(Clone, Debug)]
pub struct Machine {
    algo: Arc<dyn Algorithm>,
    workload: Workload,
    state: SystemState,
    next_step: u64,
}

impl Machine {
    pub fn new(algo: Arc<dyn Algorithm>, workload: Workload) -> Result<Self> {
        if workload.n() != algo.n() {
            return Err(SimError::Config(format!(
                "workload lists {} processes but the algorithm has {}",
                workload.n(),
                algo.n()
            )));
        }
        let state = SystemState::initial(algo.as_ref())?;
        Ok(Machine {
            algo,
            workload,
            state,
            next_step: 0,
        })
    }

    pub fn algorithm(&self) -> &dyn Algorithm {
        self.algo.as_ref()
    }

    pub fn algorithm_arc(&self) -> Arc<dyn Algorithm> {
        Arc::clone(&self.algo)
    }

    pub fn workload(&self) -> &Workload {
        &self.workload
    }

    pub fn state(&self) -> &SystemState {
        &self.state
    }

    pub fn n(&self) -> usize {
        self.algo.n()
    }

    pub fn steps_taken(&self) -> u64 {
        self.next_step
    }

    pub fn header(&self) -> TraceHeader {
        TraceHeader {
            algorithm: self.algo.kind(),
            n: self.algo.n(),
            initial_color: self.algo.initial_color(),
            workload: self.workload.clone(),
        }
    }

    pub fn step(&mut self, pid: Pid) -> Result<TraceEvent> {
        let ev = self
            .state
            .step(self.algo.as_ref(), &self.workload, pid, self.next_step)?;
        self.next_step += 1;
        Ok(ev)
    }

    pub fn is_finished(&self, pid: Pid) -> bool {
        self.state.is_finished(self.algo.as_ref(), &self.workload, pid)
    }

    pub fn all_finished(&self) -> bool {
        Pid::all(self.n()).all(|p| self.is_finished(p))
    }

    pub fn section_of(&self, pid: Pid) -> Section {
        self.state.section_of(self.algo.as_ref(), pid)
    }

    pub fn env(&self, pid: Pid) -> &LocalEnv {
        &self.state.proc(pid).env
    }

    pub fn effectively_blocked(&self, pid: Pid) -> bool {
        self.state
            .effectively_blocked(self.algo.as_ref(), &self.workload, pid)
    }

    pub fn deadlocked(&self) -> bool {
        self.state.deadlocked(self.algo.as_ref(), &self.workload)
    }
}

/// Result of [`run`].
#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub trace: Trace,
    pub verdicts: Vec<crate::monitors::Verdict>,
}

/// Drives `machine` with `scheduler` until every process is finished, the
/// schedule runs out, a deadlock is detected or `step_cap` steps have run.
pub fn run(
    machine: &mut Machine,
    scheduler: &mut dyn Scheduler,
    monitors: &mut MonitorSet,
    step_cap: u64,
) -> Result<RunOutcome> {
    let n = machine.n();
    let mut trace = Trace::new(machine.header());
    let threshold = 8 * n as u64;
    let mut since_write = 0u64;
    let mut taken = 0u64;
    trace.stop = loop {
        if machine.all_finished() {
            break StopReason::Completed;
        }
        if taken >= step_cap {
            break StopReason::StepCap;
        }
        let Some(pid) = scheduler.next_pid(machine) else {
            break StopReason::ScheduleExhausted;
        };
        let ev = machine.step(pid)?;
        taken += 1;
        since_write = if ev.access.is_write() { 0 } else { since_write + 1 };
        monitors.observe(&ev);
        let step = ev.step;
        trace.events.push(ev);
        if since_write >= threshold && since_write.is_multiple_of(threshold) && machine.deadlocked() {
            trace.deadlock_at = Some(step);
            break StopReason::Deadlock;
        }
    };
    let verdicts = monitors.finish(&trace);
    Ok(RunOutcome { trace, verdicts })
}

/// Builds a machine and runs it under `schedule` with the given monitors,
/// or the algorithm's default monitors when `properties` is `None`.
pub fn simulate(
    algo: Arc<dyn Algorithm>,
    workload: Workload,
    schedule: &crate::sched::Schedule,
    properties: Option<&[crate::monitors::Property]>,
    step_cap: u64,
) -> Result<RunOutcome> {
    let n = algo.n();
    let mut machine = Machine::new(algo, workload)?;
    let mut scheduler = schedule.scheduler(n)?;
    let header = machine.header();
    let mut monitors = match properties {
        Some(p) => MonitorSet::new(&header, p),
        None => MonitorSet::defaults(&header),
    };
    run(&mut machine, scheduler.as_mut(), &mut monitors, step_cap)
}
