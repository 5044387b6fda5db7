//! Property tests over random workloads and fair random schedules.

use proptest::prelude::*;

use gmesim_core::algo::build;
use gmesim_core::machine::simulate;
use gmesim_core::monitors::{check_all, invocation_records, Property};
use gmesim_core::sched::{random_schedule, FairRandom, PidStream};
use gmesim_core::trace::Access;
use gmesim_core::{
    AlgorithmKind, CellValue, Color, Machine, MonitorSet, Pid, RegisterId, Schedule, Scheduler, Section,
    StopReason, Trace, Workload,
};

const CAP: u64 = 200_000;

#[derive(Clone, Debug)]
struct Case {
    kind: AlgorithmKind,
    color: Color,
    sessions: Vec<Vec<u64>>,
    cs_steps: u32,
    seed: u64,
    window: usize,
}

impl Case {
    fn n(&self) -> usize {
        self.sessions.len()
    }

    fn workload(&self) -> Workload {
        Workload::from_sessions(&self.sessions, self.cs_steps).unwrap()
    }

    fn machine(&self) -> Machine {
        let algo = build(self.kind, self.n(), Some(self.color)).unwrap();
        Machine::new(algo, self.workload()).unwrap()
    }

    fn schedule(&self) -> Schedule {
        random_schedule(self.seed, self.window)
    }

    fn simulate(&self) -> (Trace, Vec<gmesim_core::Verdict>) {
        let algo = build(self.kind, self.n(), Some(self.color)).unwrap();
        let out = simulate(algo, self.workload(), &self.schedule(), None, CAP).unwrap();
        (out.trace, out.verdicts)
    }
}

fn kind() -> impl Strategy<Value = AlgorithmKind> {
    prop_oneof![
        Just(AlgorithmKind::Glb),
        Just(AlgorithmKind::Bwbgme),
        Just(AlgorithmKind::Bl)
    ]
}

fn case_for(kind: impl Strategy<Value = AlgorithmKind>) -> impl Strategy<Value = Case> {
    (kind, 1usize..=5, 1u64..=3, 1u32..=2, any::<u64>(), 1usize..=3, any::<bool>()).prop_flat_map(
        |(kind, n, session_range, cs_steps, seed, factor, black)| {
            let invocation = prop::collection::vec(1..=session_range, 1..=3);
            prop::collection::vec(invocation, n).prop_map(move |sessions| Case {
                kind,
                color: if black { Color::Black } else { Color::White },
                sessions,
                cs_steps,
                seed,
                window: factor * n,
            })
        },
    )
}

fn any_case() -> impl Strategy<Value = Case> {
    case_for(kind())
}

/// Steps `case` under its fair random schedule, calling `check` with the
/// machine before and after each step.
fn drive(case: &Case, mut check: impl FnMut(&Machine, &Machine, &gmesim_core::TraceEvent)) {
    let mut m = case.machine();
    let mut sched = FairRandom::new(case.seed, case.n(), case.window).unwrap();
    for _ in 0..CAP {
        let Some(pid) = sched.next_pid(&m) else { break };
        let before = m.clone();
        let ev = m.step(pid).unwrap();
        check(&before, &m, &ev);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn replay_is_deterministic(case in any_case()) {
        let (a, va) = case.simulate();
        let (b, vb) = case.simulate();
        prop_assert_eq!(&a, &b);
        prop_assert_eq!(va, vb);
        let pids: Vec<Pid> = a.events.iter().map(|e| e.pid).collect();
        let algo = build(case.kind, case.n(), Some(case.color)).unwrap();
        let scripted = simulate(algo, case.workload(), &Schedule::Scripted { pids }, None, CAP).unwrap();
        prop_assert_eq!(&scripted.trace.events, &a.events);
    }

    #[test]
    fn caches_stay_coherent_and_ledger_matches_trace(case in any_case()) {
        let mut rmr_events = 0u64;
        drive(&case, |before, after, ev| {
            assert!(after.state().mem.check_coherence().is_ok(), "incoherent after step {}", ev.step);
            let (l0, l1) = (before.state().mem.ledger(), after.state().mem.ledger());
            for p in Pid::all(case.n()) {
                assert!(l1.total(p) >= l0.total(p));
            }
            let delta = l1.grand_total() - l0.grand_total();
            assert_eq!(delta, u64::from(ev.rmr));
            assert!(delta <= 1, "more than one RMR in one step");
            if ev.rmr {
                assert!(ev.access.is_shared());
            }
            match ev.access {
                Access::Write { .. } => assert!(ev.rmr, "writes always reach memory"),
                Access::Local => assert!(!ev.rmr),
                Access::Read { reg, .. } => {
                    assert_eq!(ev.rmr, !before.state().mem.is_cached(ev.pid, reg).unwrap());
                    assert!(after.state().mem.is_cached(ev.pid, reg).unwrap());
                }
            }
            rmr_events += u64::from(ev.rmr);
        });
        let (trace, _) = case.simulate();
        prop_assert_eq!(trace.total_rmr(), rmr_events);
    }

    #[test]
    fn writes_invalidate_other_copies(case in any_case()) {
        drive(&case, |_, after, ev| {
            if let Access::Write { reg, .. } = ev.access {
                for p in Pid::all(case.n()) {
                    let cached = after.state().mem.is_cached(p, reg).unwrap();
                    assert_eq!(cached, p == ev.pid, "{p} copy of {reg:?} after write by {}", ev.pid);
                }
            }
        });
    }

    #[test]
    fn milestones_advance_in_order(case in any_case()) {
        let (trace, _) = case.simulate();
        for r in invocation_records(&trace) {
            let m = r.milestones();
            for w in m.windows(2) {
                prop_assert!(w[0] <= w[1]);
            }
            if let (Some(ds), Some(dc)) = (r.doorway_start, r.doorway_complete) {
                if case.kind == AlgorithmKind::Bl {
                    prop_assert_eq!(ds, dc);
                } else {
                    prop_assert!(ds < dc);
                }
            }
            if let (Some(dc), Some(cs)) = (r.doorway_complete, r.cs_enter) {
                prop_assert!(dc < cs || case.kind == AlgorithmKind::Bl);
            }
            if let (Some(cs), Some(exit)) = (r.cs_enter, r.cs_exit) {
                prop_assert!(cs < exit);
            }
        }
    }

    #[test]
    fn doorways_are_bounded(case in any_case()) {
        let (trace, _) = case.simulate();
        let n = case.n() as u64;
        let bound = match case.kind {
            AlgorithmKind::Glb => n + 3,
            AlgorithmKind::Bwbgme => n + 5,
            AlgorithmKind::Bl => 1,
        };
        for r in invocation_records(&trace).iter().filter(|r| r.doorway_complete.is_some()) {
            prop_assert!(r.doorway_steps <= bound, "{} doorway took {} steps", r.pid, r.doorway_steps);
        }
    }

    #[test]
    fn monitors_agree_with_offline_checks(case in any_case()) {
        let (trace, online) = case.simulate();
        let props = Property::defaults_for(case.kind);
        prop_assert_eq!(&online, &check_all(&trace, &props));
        prop_assert_eq!(check_all(&trace, &props), check_all(&trace, &props));
        let mut set = MonitorSet::new(&trace.header, &props);
        for ev in &trace.events {
            set.observe(ev);
        }
        prop_assert_eq!(set.finish(&trace), online);
    }

    #[test]
    fn correct_algorithms_pass_every_monitor(case in any_case()) {
        let (trace, verdicts) = case.simulate();
        for v in &verdicts {
            prop_assert!(!v.is_fail(), "{}", v);
        }
        prop_assert_eq!(trace.stop, StopReason::Completed);
    }

    #[test]
    fn fcfs_without_deadlock_means_every_invocation_finishes(case in case_for(prop_oneof![
        Just(AlgorithmKind::Glb),
        Just(AlgorithmKind::Bwbgme)
    ])) {
        let (trace, verdicts) = case.simulate();
        let fcfs_ok = verdicts.iter().any(|v| v.property == Property::Fcfs && !v.is_fail());
        if fcfs_ok && trace.deadlock_at.is_none() && trace.stop == StopReason::Completed {
            let records = invocation_records(&trace);
            prop_assert_eq!(records.len(), case.workload().total());
            prop_assert!(records.iter().all(|r| r.exit_complete.is_some()));
        }
    }

    #[test]
    fn only_numbers_above_one_flip_the_color(case in case_for(Just(AlgorithmKind::Bwbgme))) {
        drive(&case, |before, _, ev| {
            if let Access::Write { reg, .. } = ev.access {
                if reg == RegisterId::global_color() {
                    assert!(before.env(ev.pid).mynumber >= 2, "{} flipped with number 1", ev.pid);
                    assert_eq!(ev.section, Section::Exit);
                }
            }
        });
    }

    #[test]
    fn glb_processes_in_cs_hold_their_ticket_and_session(case in case_for(Just(AlgorithmKind::Glb))) {
        drive(&case, |_, after, _| {
            for p in Pid::all(case.n()) {
                if after.section_of(p) == Section::Cs {
                    let mem = &after.state().mem;
                    let ticket = mem.peek(RegisterId::token(p)).unwrap();
                    let session = mem.peek(RegisterId::session(p)).unwrap();
                    assert!(matches!(ticket, CellValue::Int(t) if t > 0));
                    assert_eq!(session, CellValue::Int(after.env(p).mysession));
                }
            }
        });
    }

    #[test]
    fn bw_tokens_never_exceed_n_plus_one(case in case_for(Just(AlgorithmKind::Bwbgme))) {
        let limit = case.n() as u64 + 1;
        drive(&case, |_, after, _| {
            for v in after.state().mem.values() {
                if let CellValue::Triple(t) = v {
                    assert!(t.number <= limit);
                }
            }
        });
    }

    #[test]
    fn random_schedules_cover_every_pid_per_window(
        seed in any::<u64>(), n in 1usize..=12, extra in 0usize..=12, blocks in 1usize..=20
    ) {
        let window = n + extra;
        let picks: Vec<Pid> = PidStream::new(seed, n, window).unwrap().take(window * blocks).collect();
        for block in picks.chunks(window) {
            for p in Pid::all(n) {
                prop_assert!(block.contains(&p));
            }
        }
        prop_assert!(PidStream::new(seed, n, n - 1).is_err());
    }
}

