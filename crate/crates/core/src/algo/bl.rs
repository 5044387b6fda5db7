//! One-bit mutual exclusion in the style of Burns and Lamport. Sessions are
//! ignored. Used to exhibit quadratic RMR cost under an adversarial
//! schedule.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::{Result, SimError};
use crate::machine::{Algorithm, AlgorithmKind, Bus, Flow, LocalEnv, Outcome, Pc, Section};
use crate::memcc::{CellValue, Pid, RegisterId};
use crate::trace::Trace;

use super::check_n;

const REMAINDER: u8 = 0;
/// Sets the bit. Phase 0 is the first attempt, phase 1 a retry.
const SET_BIT: u8 = 1;
const SCAN_LOWER: u8 = 3;
const CLEAR_BIT: u8 = 4;
const WAIT_LOWER: u8 = 5;
const WAIT_HIGHER: u8 = 10;
/// Local step used only when both scans are empty (a single process).
const SCANS_DONE: u8 = 11;
const CS: u8 = 12;
const EXIT: u8 = 13;

#[derive(Clone, Debug)]
pub struct BurnsLamport {
    n: usize,
}

impl BurnsLamport {
    pub fn new(n: usize) -> Result<Self> {
        check_n(n)?;
        Ok(BurnsLamport { n })
    }

    /// Positions the process at the start of the upward scan, or straight
    /// into the critical section when there is nobody above.
    fn start_upward(&self, me: Pid, env: &mut LocalEnv, out: Outcome) -> Outcome {
        env.j = me.get() + 1;
        if env.j > self.n {
            out.flow(Flow::EnterCs)
        } else {
            env.goto(WAIT_HIGHER);
            out
        }
    }
}

impl Algorithm for BurnsLamport {
    fn kind(&self) -> AlgorithmKind {
        AlgorithmKind::Bl
    }

    fn n(&self) -> usize {
        self.n
    }

    fn declarations(&self) -> Vec<(RegisterId, CellValue)> {
        Pid::all(self.n)
            .map(|p| (RegisterId::competing(p), CellValue::Bool(false)))
            .collect()
    }

    fn section(&self, pc: Pc) -> Section {
        match pc.line {
            REMAINDER => Section::Remainder,
            SET_BIT if pc.phase == 0 => Section::Doorway,
            CS => Section::Cs,
            EXIT => Section::Exit,
            _ => Section::Waiting,
        }
    }

    fn is_wait_line(&self, line: u8) -> bool {
        matches!(line, WAIT_LOWER | WAIT_HIGHER)
    }

    fn remainder_pc(&self) -> Pc {
        Pc::at(REMAINDER)
    }

    fn entry_pc(&self) -> Pc {
        Pc::at(SET_BIT)
    }

    fn cs_pc(&self) -> Pc {
        Pc::at(CS)
    }

    fn exit_pc(&self) -> Pc {
        Pc::at(EXIT)
    }

    fn execute(&self, me: Pid, env: &mut LocalEnv, bus: &mut Bus<'_>) -> Result<Outcome> {
        let line = env.pc.line;
        match line {
            SET_BIT => {
                bus.write(RegisterId::competing(me), CellValue::Bool(true))?;
                let out = if env.pc.phase == 0 {
                    Outcome::at(line).flow(Flow::DoorwayDone)
                } else {
                    Outcome::at(line)
                };
                if me.get() > 1 {
                    env.j = 1;
                    env.goto(SCAN_LOWER);
                } else if self.n > 1 {
                    env.j = 2;
                    env.goto(WAIT_HIGHER);
                } else {
                    env.goto(SCANS_DONE);
                }
                Ok(out)
            }
            SCAN_LOWER => {
                let j = env.j;
                if bus.read_bool(RegisterId::competing(Pid(j)))? {
                    env.goto(CLEAR_BIT);
                    return Ok(Outcome::on(line, j));
                }
                env.j += 1;
                if env.j < me.get() {
                    return Ok(Outcome::on(line, j));
                }
                Ok(self.start_upward(me, env, Outcome::on(line, j)))
            }
            CLEAR_BIT => {
                bus.write(RegisterId::competing(me), CellValue::Bool(false))?;
                env.goto(WAIT_LOWER);
                Ok(Outcome::at(line))
            }
            WAIT_LOWER => {
                let j = env.j;
                if bus.read_bool(RegisterId::competing(Pid(j)))? {
                    Ok(Outcome::on(line, j).waiting())
                } else {
                    env.pc = Pc {
                        line: SET_BIT,
                        phase: 1,
                    };
                    Ok(Outcome::on(line, j))
                }
            }
            WAIT_HIGHER => {
                let j = env.j;
                if bus.read_bool(RegisterId::competing(Pid(j)))? {
                    return Ok(Outcome::on(line, j).waiting());
                }
                env.j += 1;
                if env.j > self.n {
                    Ok(Outcome::on(line, j).flow(Flow::EnterCs))
                } else {
                    Ok(Outcome::on(line, j))
                }
            }
            SCANS_DONE => Ok(Outcome::at(line).flow(Flow::EnterCs)),
            EXIT => {
                bus.write(RegisterId::competing(me), CellValue::Bool(false))?;
                Ok(Outcome::at(line).flow(Flow::ExitDone))
            }
            other => Err(SimError::Config(format!(
                "one-bit algorithm has no executable line {other}"
            ))),
        }
    }

    fn exit_access_bound(&self) -> usize {
        1
    }
}

/// How often each process got blocked, and by whom.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct BlockCounts {
    /// Blocking episodes per process, indexed by pid - 1.
    pub total: Vec<u64>,
    /// `(waiter, blocker) -> episodes`.
    pub by_blocker: BTreeMap<(Pid, Pid), u64>,
}

impl BlockCounts {
    pub fn of(&self, pid: Pid) -> u64 {
        self.total.get(pid.index()).copied().unwrap_or(0)
    }

    pub fn between(&self, waiter: Pid, blocker: Pid) -> u64 {
        self.by_blocker.get(&(waiter, blocker)).copied().unwrap_or(0)
    }
}

/// Counts blocking episodes in a one-bit algorithm trace: each arrival at
/// a wait line for some `j` whose condition is observed false at least
/// once counts one, no matter how long the process then spins.
pub fn block_events(trace: &Trace) -> Result<BlockCounts> {
    if trace.header.algorithm != AlgorithmKind::Bl {
        return Err(SimError::WrongAlgorithm {
            expected: AlgorithmKind::Bl.name(),
            found: trace.header.algorithm.name(),
        });
    }
    let n = trace.header.n;
    let mut counts = BlockCounts {
        total: vec![0; n],
        by_blocker: BTreeMap::new(),
    };
    // Per process: the (line, j) wait in progress and whether it counted.
    let mut episode: Vec<Option<(u8, usize, bool)>> = vec![None; n];
    for ev in trace.events.iter().filter(|e| !e.noop) {
        let slot = &mut episode[ev.pid.index()];
        let (WAIT_LOWER | WAIT_HIGHER, Some(j)) = (ev.line, ev.target) else {
            *slot = None;
            continue;
        };
        if !matches!(*slot, Some((l, t, _)) if l == ev.line && t == j) {
            *slot = Some((ev.line, j, false));
        }
        if let Some((_, _, counted)) = slot {
            if ev.wait_false && !*counted {
                *counted = true;
                counts.total[ev.pid.index()] += 1;
                *counts.by_blocker.entry((ev.pid, Pid(j))).or_default() += 1;
            }
        }
    }
    Ok(counts)
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::machine::{Machine, Workload};
    use crate::trace::{Marker, StopReason};

    fn machine(n: usize) -> Machine {
        let algo = Arc::new(BurnsLamport::new(n).unwrap());
        Machine::new(algo, Workload::uniform(n, 1, 1, |_, _| 1).unwrap()).unwrap()
    }

    fn trace_of(m: &Machine, events: Vec<crate::trace::TraceEvent>) -> Trace {
        Trace {
            header: m.header(),
            events,
            stop: StopReason::Completed,
            deadlock_at: None,
        }
    }

    #[test]
    fn solo_process_enters_after_setting_its_bit() {
        let mut m = machine(3);
        let mut evs = Vec::new();
        loop {
            let ev = m.step(Pid(2)).unwrap();
            let done = ev.markers.contains(Marker::ExitComplete);
            evs.push(ev);
            if done {
                break;
            }
        }
        assert!(evs.iter().all(|e| !e.wait_false));
        assert!(evs[0].markers.contains(Marker::DoorwayStart));
        assert!(evs[0].markers.contains(Marker::DoorwayComplete));
        let counts = block_events(&trace_of(&m, evs)).unwrap();
        assert_eq!(counts.total, vec![0, 0, 0]);
    }

    #[test]
    fn single_process_system_still_separates_doorway_and_entry() {
        let mut m = machine(1);
        let a = m.step(Pid(1)).unwrap();
        let b = m.step(Pid(1)).unwrap();
        assert!(a.markers.contains(Marker::DoorwayComplete));
        assert!(b.markers.contains(Marker::CsEnter));
    }

    #[test]
    fn higher_process_backs_off_for_a_lower_bit() {
        let mut m = machine(2);
        m.step(Pid(1)).unwrap();
        let mut evs = Vec::new();
        for _ in 0..4 {
            evs.push(m.step(Pid(2)).unwrap());
        }
        // set, scan sees P1, clear, wait.
        assert_eq!(evs[2].access.register(), Some(RegisterId::competing(Pid(2))));
        assert!(evs[2].access.is_write());
        assert_eq!(evs[3].line, WAIT_LOWER);
        assert!(evs[3].wait_false);
        assert!(m.effectively_blocked(Pid(2)));
        for _ in 0..5 {
            evs.push(m.step(Pid(2)).unwrap());
        }
        let counts = block_events(&trace_of(&m, evs)).unwrap();
        assert_eq!(counts.of(Pid(2)), 1);
        assert_eq!(counts.between(Pid(2), Pid(1)), 1);
    }

    #[test]
    fn block_events_rejects_other_algorithms() {
        let algo = super::super::build_glb(2).unwrap();
        let m = Machine::new(algo, Workload::uniform(2, 1, 1, |_, _| 1).unwrap()).unwrap();
        assert!(matches!(
            block_events(&trace_of(&m, vec![])),
            Err(SimError::WrongAlgorithm { .. })
        ));
    }
}
