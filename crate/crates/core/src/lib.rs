//! Deterministic simulator for mutual-exclusion and group-mutual-exclusion
//! algorithms on a cache-coherent shared memory, with RMR accounting,
//! property monitors, schedulers and a bounded exhaustive explorer.

pub mod algo;
pub mod error;
pub mod machine;
pub mod memcc;
pub mod monitors;
pub mod sched;
pub mod sweep;
pub mod trace;

pub use error::{Result, SimError};
pub use machine::{run, Algorithm, AlgorithmKind, Machine, RunOutcome, Section, Workload};
pub use memcc::{CellValue, Color, Pid, RegisterId, Token};
pub use monitors::{MonitorSet, Property, Status, Verdict};
pub use sched::{Schedule, Scheduler};
pub use trace::{Marker, StopReason, Trace, TraceEvent};
