//! Observable record of a simulation: one [`TraceEvent`] per atomic step.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::machine::{AlgorithmKind, Section, Workload};
use crate::memcc::{CellValue, Color, Pid, RegisterId};

/// Section-transition markers carried by an event.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Marker {
    DoorwayStart,
    DoorwayComplete,
    CsEnter,
    CsExit,
    ExitComplete,
}

impl Marker {
    pub const ALL: [Marker; 5] = [
        Marker::DoorwayStart,
        Marker::DoorwayComplete,
        Marker::CsEnter,
        Marker::CsExit,
        Marker::ExitComplete,
    ];

    fn bit(self) -> u8 {
        1 << (self as u8)
    }
}

/// Small set of [`Marker`]s; serialized as a list.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub struct Markers(u8);

impl Markers {
    pub fn insert(&mut self, m: Marker) {
        self.0 |= m.bit();
    }

    pub fn contains(self, m: Marker) -> bool {
        self.0 & m.bit() != 0
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn iter(self) -> impl Iterator<Item = Marker> {
        Marker::ALL.into_iter().filter(move |m| self.contains(*m))
    }
}

impl Serialize for Markers {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(self.iter())
    }
}

impl<'de> Deserialize<'de> for Markers {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let list = Vec::<Marker>::deserialize(d)?;
        let mut m = Markers::default();
        for x in list {
            m.insert(x);
        }
        Ok(m)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "lowercase")]
pub enum Access {
    Local,
    Read { reg: RegisterId, value: CellValue },
    Write { reg: RegisterId, value: CellValue },
}

impl Access {
    pub fn is_shared(&self) -> bool {
        !matches!(self, Access::Local)
    }

    pub fn register(&self) -> Option<RegisterId> {
        match *self {
            Access::Local => None,
            Access::Read { reg, .. } | Access::Write { reg, .. } => Some(reg),
        }
    }

    pub fn is_write(&self) -> bool {
        matches!(self, Access::Write { .. })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub step: u64,
    pub pid: Pid,
    /// Pseudocode line the step executed.
    pub line: u8,
    /// Loop index the step refers to, when inside a `for j` loop.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub target: Option<usize>,
    pub access: Access,
    pub rmr: bool,
    pub section: Section,
    pub markers: Markers,
    /// Session of the invocation in progress (0 between invocations).
    pub session: u64,
    /// Zero-based ordinal of the invocation this step belongs to.
    pub invocation: u32,
    /// The step finished a wait-condition evaluation that came out false.
    pub wait_false: bool,
    /// Scheduled while idle with no work left; nothing happened.
    #[serde(skip_serializing_if = "std::ops::Not::not", default)]
    pub noop: bool,
}

impl fmt::Display for TraceEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{} {} L{}", self.step, self.pid, self.line)?;
        if let Some(j) = self.target {
            write!(f, " j={j}")?;
        }
        match self.access {
            Access::Local => write!(f, " local")?,
            Access::Read { reg, value } => write!(f, " read {reg}={value}")?,
            Access::Write { reg, value } => write!(f, " write {reg}:={value}")?,
        }
        if self.rmr {
            f.write_str(" rmr")?;
        }
        if self.wait_false {
            f.write_str(" wait")?;
        }
        for m in self.markers.iter() {
            write!(f, " <{m:?}>")?;
        }
        Ok(())
    }
}

/// Static facts about the run a trace came from.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceHeader {
    pub algorithm: AlgorithmKind,
    pub n: usize,
    pub initial_color: Option<Color>,
    pub workload: Workload,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Completed,
    StepCap,
    ScheduleExhausted,
    Deadlock,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trace {
    pub header: TraceHeader,
    pub events: Vec<TraceEvent>,
    pub stop: StopReason,
    /// Step index after which every unfinished process was effectively
    /// blocked.
    pub deadlock_at: Option<u64>,
}

impl Trace {
    pub fn new(header: TraceHeader) -> Self {
        Trace {
            header,
            events: Vec::new(),
            stop: StopReason::Completed,
            deadlock_at: None,
        }
    }

    pub fn truncated(&self) -> bool {
        self.stop == StopReason::StepCap
    }

    pub fn events_of(&self, pid: Pid) -> impl Iterator<Item = &TraceEvent> {
        self.events.iter().filter(move |e| e.pid == pid)
    }

    /// Step indices at which `pid` carried `marker`.
    pub fn marker_steps(&self, pid: Pid, marker: Marker) -> Vec<u64> {
        self.events_of(pid)
            .filter(|e| e.markers.contains(marker))
            .map(|e| e.step)
            .collect()
    }

    pub fn total_rmr(&self) -> u64 {
        self.events.iter().filter(|e| e.rmr).count() as u64
    }
}
