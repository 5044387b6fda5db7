//! Milestone-driven scripts: "step P until X" directives turned into a
//! concrete pid list by driving a machine.

use serde::{Deserialize, Serialize};

use super::Schedule;
use crate::algo::build_bl;
use crate::error::{Result, SimError};
use crate::machine::{Machine, Workload};
use crate::memcc::{CellValue, Family, Pid};
use crate::trace::{Access, Marker, TraceEvent};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Until {
    Marker(Marker),
    /// A wait condition came out false.
    Blocked,
    /// The process read the global color in its doorway.
    ColorRead,
    /// The process set its own competing bit.
    BitSet,
    /// Exactly this many steps.
    Steps(u32),
}

impl Until {
    fn reached(self, ev: &TraceEvent, taken: u32) -> bool {
        match self {
            Until::Marker(m) => ev.markers.contains(m),
            Until::Blocked => ev.wait_false,
            Until::ColorRead => matches!(
                ev.access,
                Access::Read { reg, .. } if reg.family == Family::GlobalColor
                    && ev.section == crate::machine::Section::Doorway
            ),
            Until::BitSet => matches!(
                ev.access,
                Access::Write { reg, value: CellValue::Bool(true) }
                    if reg.family == Family::Competing && reg.index == Some(ev.pid.get())
            ),
            Until::Steps(k) => taken >= k,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Directive {
    pub pid: Pid,
    pub until: Until,
    /// Step budget for this directive.
    pub limit: u32,
    /// Fail when the budget runs out before the milestone.
    pub required: bool,
}

impl Directive {
    pub fn new(pid: usize, until: Until) -> Self {
        Directive {
            pid: Pid(pid),
            until,
            limit: 10_000,
            required: true,
        }
    }

    /// Up to `limit` steps, stopping early at the milestone.
    pub fn at_most(pid: usize, until: Until, limit: u32) -> Self {
        Directive {
            pid: Pid(pid),
            until,
            limit,
            required: false,
        }
    }
}

/// An ordered list of directives.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptPlan {
    pub directives: Vec<Directive>,
}

impl ScriptPlan {
    pub fn push(&mut self, d: Directive) -> &mut Self {
        self.directives.push(d);
        self
    }

    /// Drives `machine` through the plan and returns the pids stepped.
    pub fn realize(&self, machine: &mut Machine) -> Result<Vec<Pid>> {
        let mut pids = Vec::new();
        for (i, d) in self.directives.iter().enumerate() {
            let mut taken = 0u32;
            let mut reached = matches!(d.until, Until::Steps(0));
            while !reached && taken < d.limit {
                if machine.is_finished(d.pid) {
                    break;
                }
                let ev = machine.step(d.pid)?;
                pids.push(d.pid);
                taken += 1;
                reached = d.until.reached(&ev, taken);
            }
            if !reached && d.required {
                return Err(SimError::Script(format!(
                    "directive {i}: {} did not reach {:?} within {} step(s)",
                    d.pid, d.until, taken
                )));
            }
        }
        Ok(pids)
    }

    pub fn schedule(&self, machine: &mut Machine) -> Result<Schedule> {
        Ok(Schedule::Scripted {
            pids: self.realize(machine)?,
        })
    }
}

/// Workload the adversarial one-bit schedule is built for: one invocation
/// per process with a one-step critical section.
pub fn bl_adversarial_workload(n: usize) -> Result<Workload> {
    Workload::uniform(n, 1, 1, |_, _| 1)
}

/// Schedule under which the highest process P_n is blocked by each lower
/// P_j exactly j times.
///
/// Round m lets P_m win. Processes set their bits from the top down; each
/// newly set bit of P_k makes P_{k+1} back off and makes P_n back off once
/// more, after which P_m runs to completion and releases everyone above.
pub fn bl_adversarial_schedule(n: usize) -> Result<Schedule> {
    if n < 2 {
        return Err(SimError::Config(
            "the adversarial schedule needs at least two processes".into(),
        ));
    }
    let mut plan = ScriptPlan::default();
    for m in 1..n {
        plan.push(Directive::new(n, Until::BitSet));
        for k in (m..n).rev() {
            plan.push(Directive::new(k, Until::BitSet));
            if k + 1 < n {
                plan.push(Directive::new(k + 1, Until::Blocked));
                plan.push(Directive::new(n, Until::BitSet));
            }
            plan.push(Directive::new(n, Until::Blocked));
        }
        plan.push(Directive::new(m, Until::Marker(Marker::ExitComplete)));
    }
    plan.push(Directive::new(n, Until::Marker(Marker::ExitComplete)));
    let mut machine = Machine::new(build_bl(n)?, bl_adversarial_workload(n)?)?;
    plan.schedule(&mut machine)
}

/// Four processes, the first three in session 1 and the last in session 2.
/// Two session-1 processes share the critical section, one leaves and a
/// third joins, then the conflicting process arrives and the session-1
/// processes leave one by one. Exiting with token number 1 is exactly the
/// case where a flip of the global color would let the late process in
/// too early.
pub fn bw_overtake_narrative_plan() -> Result<(Workload, ScriptPlan)> {
    let workload = Workload::from_sessions(&[vec![1], vec![1], vec![1], vec![2]], 1)?;
    let mut plan = ScriptPlan::default();
    plan.push(Directive::new(1, Until::Marker(Marker::DoorwayComplete)))
        .push(Directive::new(2, Until::Marker(Marker::DoorwayComplete)))
        .push(Directive::new(1, Until::Marker(Marker::CsEnter)))
        .push(Directive::new(2, Until::Marker(Marker::CsEnter)))
        .push(Directive::new(1, Until::Marker(Marker::ExitComplete)))
        .push(Directive::new(3, Until::Marker(Marker::CsEnter)))
        .push(Directive::new(4, Until::Marker(Marker::DoorwayComplete)))
        .push(Directive::new(4, Until::Blocked))
        .push(Directive::new(3, Until::Marker(Marker::ExitComplete)))
        .push(Directive::at_most(4, Until::Marker(Marker::CsEnter), 20))
        .push(Directive::new(2, Until::Marker(Marker::ExitComplete)))
        .push(Directive::new(4, Until::Marker(Marker::ExitComplete)));
    Ok((workload, plan))
}

/// Two same-session processes: P1 reads the global color and then stalls
/// while P2 completes two invocations with token number 1.
pub fn bw_hanging_reader_plan() -> Result<(Workload, ScriptPlan)> {
    let workload = Workload::from_sessions(&[vec![1], vec![1, 1]], 1)?;
    let mut plan = ScriptPlan::default();
    plan.push(Directive::new(1, Until::ColorRead))
        .push(Directive::new(2, Until::Marker(Marker::ExitComplete)))
        .push(Directive::new(2, Until::Marker(Marker::ExitComplete)))
        .push(Directive::new(1, Until::Marker(Marker::ExitComplete)));
    Ok((workload, plan))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algo::{block_events, build_bwbgme};
    use crate::machine::run;
    use crate::memcc::Color;
    use crate::monitors::MonitorSet;
    use crate::trace::StopReason;

    fn replay_bl(n: usize) -> crate::trace::Trace {
        let schedule = bl_adversarial_schedule(n).unwrap();
        let mut m = Machine::new(build_bl(n).unwrap(), bl_adversarial_workload(n).unwrap()).unwrap();
        let mut s = schedule.scheduler(n).unwrap();
        let mut mon = MonitorSet::defaults(&m.header());
        run(&mut m, s.as_mut(), &mut mon, u64::MAX).unwrap().trace
    }

    #[test]
    fn adversarial_schedule_small_cases() {
        for (n, expected) in [(2, 1), (3, 3), (4, 6), (6, 15)] {
            let t = replay_bl(n);
            assert_eq!(t.stop, StopReason::Completed);
            let c = block_events(&t).unwrap();
            assert_eq!(c.of(Pid(n)), expected, "n={n}");
            for j in 1..n {
                assert_eq!(c.between(Pid(n), Pid(j)), j as u64, "n={n} j={j}");
            }
        }
    }

    #[test]
    fn adversarial_schedule_needs_two_processes() {
        assert!(bl_adversarial_schedule(1).is_err());
    }

    #[test]
    fn required_milestone_failure_is_reported() {
        let mut m = Machine::new(build_bl(2).unwrap(), bl_adversarial_workload(2).unwrap()).unwrap();
        let mut plan = ScriptPlan::default();
        plan.push(Directive::new(1, Until::Blocked));
        assert!(matches!(plan.realize(&mut m), Err(SimError::Script(_))));
    }

    #[test]
    fn narrative_plan_runs_on_the_real_algorithm() {
        let (w, plan) = bw_overtake_narrative_plan().unwrap();
        let mut m = Machine::new(build_bwbgme(4, Color::White).unwrap(), w).unwrap();
        let pids = plan.realize(&mut m).unwrap();
        assert!(m.all_finished());
        assert!(!pids.is_empty());
    }
}
