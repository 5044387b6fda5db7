//! Bounded exhaustive exploration of every interleaving.
//!
//! Depth-first over all enabled-process choices with visited-state
//! hashing. The state key holds the global register values, every
//! process's private variables and workload position, and the ghost
//! variables the temporal checks need. Caches are left out: they only
//! decide which accesses cost an RMR, never which value a read returns.

use std::collections::BTreeMap;
use std::sync::Arc;

use rustc_hash::FxHashSet;
use serde::Serialize;

use crate::error::{Result, SimError};
use crate::machine::{Algorithm, AlgorithmKind, Section, SystemState, Workload};
use crate::memcc::{CellValue, Family, Pid};
use crate::monitors::Property;
use crate::trace::{Access, Marker, TraceEvent};

#[derive(Clone, Debug)]
pub struct ExploreConfig {
    pub max_states: usize,
    pub max_depth: usize,
    /// Paths on which any token number exceeds this are cut off. `None`
    /// means 4 * N * invocations-per-process for unbounded tokens and no
    /// ceiling otherwise.
    pub token_ceiling: Option<u64>,
    pub properties: Vec<Property>,
}

impl Default for ExploreConfig {
    fn default() -> Self {
        ExploreConfig {
            max_states: 20_000_000,
            max_depth: 10_000,
            token_ceiling: None,
            properties: vec![
                Property::MutualExclusion,
                Property::Fcfs,
                Property::FlipInvariant,
                Property::TokenBound,
                Property::Progress,
            ],
        }
    }
}

/// A schedule prefix that reaches a violating state from the initial one.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Counterexample {
    pub property: Property,
    pub path: Vec<Pid>,
    pub detail: String,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct ExplorationReport {
    pub states: u64,
    pub transitions: u64,
    pub max_depth: usize,
    /// Violating states found, per property. Deadlocks are counted under
    /// [`Property::Progress`].
    pub violations: BTreeMap<Property, u64>,
    pub deadlocks: u64,
    pub max_token: u64,
    /// Paths cut off by the token ceiling.
    pub ceiling_hits: u64,
    /// Terminal states where every process finished.
    pub completed: u64,
    pub truncated: bool,
    /// First counterexample per property.
    pub counterexamples: Vec<Counterexample>,
}

impl ExplorationReport {
    pub fn violations_of(&self, p: Property) -> u64 {
        self.violations.get(&p).copied().unwrap_or(0)
    }

    pub fn total_violations(&self) -> u64 {
        self.violations.values().sum()
    }

    pub fn is_clean(&self) -> bool {
        self.total_violations() == 0
    }
}

/// History the temporal properties need, per process.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
struct Ghost {
    /// Doorway completed in the current invocation, not yet entered.
    waiting: bool,
    /// Bit q set: P_{q+1} conflicting, had completed its doorway when this
    /// process started its own, and has not entered since.
    ahead: u64,
    /// Flips seen since the global color read, while the window is open.
    flips: u8,
    window: bool,
}

#[derive(Clone)]
struct Node {
    sys: SystemState,
    ghost: Vec<Ghost>,
}

struct Ctx<'a> {
    algo: &'a dyn Algorithm,
    n: usize,
    check: [bool; 5],
    ceiling: Option<u64>,
    bounded: bool,
}

const ME: usize = 0;
const FCFS: usize = 1;
const FLIP: usize = 2;
const BOUND: usize = 3;
const PROGRESS: usize = 4;

fn put_varint(buf: &mut Vec<u8>, mut v: u64) {
    while v >= 0x80 {
        buf.push((v as u8) | 0x80);
        v >>= 7;
    }
    buf.push(v as u8);
}

fn color_byte(c: Option<crate::memcc::Color>) -> u8 {
    match c {
        None => 0,
        Some(crate::memcc::Color::Black) => 1,
        Some(crate::memcc::Color::White) => 2,
    }
}

fn encode(node: &Node, buf: &mut Vec<u8>) {
    buf.clear();
    for v in node.sys.mem.values() {
        match *v {
            CellValue::Int(x) => put_varint(buf, x),
            CellValue::Bool(b) => buf.push(b as u8),
            CellValue::Color(c) => buf.push(color_byte(Some(c))),
            CellValue::Triple(t) => {
                put_varint(buf, t.session);
                buf.push(color_byte(t.color));
                put_varint(buf, t.number);
            }
        }
    }
    for (p, g) in node.sys.procs.iter().zip(&node.ghost) {
        let e = &p.env;
        buf.extend_from_slice(&[e.pc.line, e.pc.phase]);
        put_varint(buf, e.j as u64);
        put_varint(buf, e.mysession);
        buf.push(color_byte(Some(e.mycolor)));
        put_varint(buf, e.mynumber);
        put_varint(buf, e.other.session);
        buf.push(color_byte(e.other.color));
        put_varint(buf, e.other.number);
        put_varint(buf, u64::from(e.cs_left));
        put_varint(buf, u64::from(p.started));
        buf.push(g.waiting as u8 | (g.window as u8) << 1 | g.flips << 2);
        put_varint(buf, g.ahead);
    }
}

impl Ctx<'_> {
    /// Applies `ev` to the ghost state; returns a violated property.
    fn update_ghost(
        &self,
        node: &mut Node,
        ev: &TraceEvent,
        color_changed: bool,
    ) -> Option<(usize, String)> {
        let me = ev.pid.index();
        let mut found = None;
        if ev.markers.contains(Marker::DoorwayStart) {
            let mine = node.sys.procs[me].env.mysession;
            let mut ahead = 0;
            for q in 0..self.n {
                if q != me && node.ghost[q].waiting && node.sys.procs[q].env.mysession != mine {
                    ahead |= 1 << q;
                }
            }
            node.ghost[me].ahead = ahead;
        }
        if ev.markers.contains(Marker::DoorwayComplete) {
            node.ghost[me].waiting = true;
        }
        if ev.markers.contains(Marker::CsEnter) {
            let ahead = node.ghost[me].ahead;
            if self.check[FCFS] && ahead != 0 {
                found = Some((
                    FCFS,
                    format!(
                        "{} entered ahead of P{}",
                        ev.pid,
                        ahead.trailing_zeros() + 1
                    ),
                ));
            }
            node.ghost[me].waiting = false;
            node.ghost[me].ahead = 0;
            for g in &mut node.ghost {
                g.ahead &= !(1 << me);
            }
        }
        if self.bounded {
            match ev.access {
                Access::Read { reg, .. }
                    if reg.family == Family::GlobalColor && ev.section == Section::Doorway =>
                {
                    node.ghost[me].window = true;
                    node.ghost[me].flips = 0;
                }
                Access::Write { reg, .. } if reg.family == Family::GlobalColor && color_changed => {
                    for (q, g) in node.ghost.iter_mut().enumerate() {
                        if g.window {
                            g.flips = (g.flips + 1).min(2);
                            if g.flips >= 2 && self.check[FLIP] && found.is_none() {
                                found = Some((
                                    FLIP,
                                    format!("second flip inside the window of P{}", q + 1),
                                ));
                            }
                        }
                    }
                }
                _ => {}
            }
            if ev.markers.contains(Marker::ExitComplete) {
                node.ghost[me].window = false;
                node.ghost[me].flips = 0;
            }
        }
        found
    }

    /// State predicates: mutual exclusion and the token bound.
    fn check_state(&self, node: &Node) -> (Option<(usize, String)>, u64) {
        let mut max_token = 0;
        let mut found = None;
        for v in node.sys.mem.values() {
            let t = match v {
                CellValue::Triple(t) => t.number,
                _ => continue,
            };
            max_token = max_token.max(t);
        }
        if self.algo.kind() == AlgorithmKind::Glb {
            for p in Pid::all(self.n) {
                if let Ok(CellValue::Int(t)) = node.sys.mem.peek(crate::memcc::RegisterId::token(p)) {
                    max_token = max_token.max(t);
                }
            }
        }
        if self.check[BOUND] && self.bounded && max_token > self.n as u64 + 1 {
            found = Some((BOUND, format!("token number {max_token} above N+1")));
        }
        if self.check[ME] {
            let inside: Vec<(usize, u64)> = node
                .sys
                .procs
                .iter()
                .enumerate()
                .filter(|(_, p)| self.algo.section(p.env.pc) == Section::Cs)
                .map(|(q, p)| (q, p.env.mysession))
                .collect();
            'outer: for (a, sa) in &inside {
                for (b, sb) in &inside {
                    if a < b && sa != sb {
                        found = Some((ME, format!("P{} and P{} share the critical section", a + 1, b + 1)));
                        break 'outer;
                    }
                }
            }
        }
        (found, max_token)
    }
}

struct Frame {
    node: Node,
    next: usize,
}

/// Explores every interleaving of `workload` under `algo`.
pub fn explore(algo: Arc<dyn Algorithm>, workload: &Workload, cfg: &ExploreConfig) -> Result<ExplorationReport> {
    let n = algo.n();
    if workload.n() != n {
        return Err(SimError::Config("workload size differs from process count".into()));
    }
    if n > 64 {
        return Err(SimError::Config("exploration supports at most 64 processes".into()));
    }
    let has = |p| cfg.properties.contains(&p);
    let unbounded = algo.kind() == AlgorithmKind::Glb;
    let per_proc = (0..n).map(|q| workload.len_of(Pid::from_index(q))).max().unwrap_or(0) as u64;
    let ctx = Ctx {
        algo: algo.as_ref(),
        n,
        check: [
            has(Property::MutualExclusion),
            has(Property::Fcfs),
            has(Property::FlipInvariant),
            has(Property::TokenBound),
            has(Property::Progress),
        ],
        ceiling: cfg
            .token_ceiling
            .or_else(|| unbounded.then_some(4 * n as u64 * per_proc.max(1))),
        bounded: algo.kind() == AlgorithmKind::Bwbgme,
    };
    let props = [
        Property::MutualExclusion,
        Property::Fcfs,
        Property::FlipInvariant,
        Property::TokenBound,
        Property::Progress,
    ];

    let mut report = ExplorationReport::default();
    let mut visited: FxHashSet<Box<[u8]>> = FxHashSet::default();
    let mut key = Vec::with_capacity(64);
    let root = Node {
        sys: SystemState::initial(algo.as_ref())?,
        ghost: vec![Ghost::default(); n],
    };
    encode(&root, &mut key);
    visited.insert(key.as_slice().into());
    report.states = 1;
    let mut path: Vec<Pid> = Vec::new();
    let mut stack = vec![Frame { node: root, next: 0 }];

    let record = |report: &mut ExplorationReport, which: usize, path: &[Pid], detail: String| {
        let property = props[which];
        *report.violations.entry(property).or_default() += 1;
        if !report.counterexamples.iter().any(|c| c.property == property) {
            report.counterexamples.push(Counterexample {
                property,
                path: path.to_vec(),
                detail,
            });
        }
    };

    while let Some(top) = stack.last_mut() {
        if top.next >= n {
            stack.pop();
            path.pop();
            continue;
        }
        let pid = Pid::from_index(top.next);
        top.next += 1;
        if top.node.sys.is_finished(ctx.algo, workload, pid) {
            continue;
        }
        if path.len() >= cfg.max_depth {
            report.truncated = true;
            continue;
        }
        let mut child = top.node.clone();
        let before = child
            .sys
            .mem
            .peek(crate::memcc::RegisterId::global_color())
            .ok();
        let ev = child.sys.step(ctx.algo, workload, pid, path.len() as u64)?;
        report.transitions += 1;
        let color_changed = matches!(
            ev.access,
            Access::Write { reg, value } if reg.family == Family::GlobalColor && before != Some(value)
        );
        let ghost_violation = ctx.update_ghost(&mut child, &ev, color_changed);

        encode(&child, &mut key);
        if visited.contains(key.as_slice()) {
            continue;
        }
        if visited.len() >= cfg.max_states {
            report.truncated = true;
            break;
        }
        visited.insert(key.as_slice().into());
        report.states += 1;
        path.push(pid);
        report.max_depth = report.max_depth.max(path.len());

        let (state_violation, max_token) = ctx.check_state(&child);
        report.max_token = report.max_token.max(max_token);
        let mut stop = false;
        for v in [ghost_violation, state_violation].into_iter().flatten() {
            record(&mut report, v.0, &path, v.1);
            stop = true;
        }
        if !stop && ctx.ceiling.is_some_and(|c| max_token > c) {
            report.ceiling_hits += 1;
            stop = true;
        }
        if !stop && child.sys.deadlocked(ctx.algo, workload) {
            report.deadlocks += 1;
            if ctx.check[PROGRESS] {
                record(&mut report, PROGRESS, &path, "every unfinished process is blocked".into());
            }
            stop = true;
        }
        if !stop && Pid::all(n).all(|p| child.sys.is_finished(ctx.algo, workload, p)) {
            report.completed += 1;
        }
        if stop {
            path.pop();
            continue;
        }
        stack.push(Frame { node: child, next: 0 });
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algo::{build_bl, build_glb};

    #[test]
    fn single_process_single_path() {
        let w = Workload::from_sessions(&[vec![1]], 1).unwrap();
        let r = explore(build_glb(1).unwrap(), &w, &ExploreConfig::default()).unwrap();
        assert!(r.is_clean());
        assert_eq!(r.completed, 1);
        assert_eq!(r.states as usize, r.max_depth + 1);
        assert!(!r.truncated);
    }

    #[test]
    fn two_conflicting_glb_processes_are_safe() {
        let w = Workload::from_sessions(&[vec![1], vec![2]], 1).unwrap();
        let r = explore(build_glb(2).unwrap(), &w, &ExploreConfig::default()).unwrap();
        assert!(r.is_clean(), "{r:?}");
        assert_eq!(r.deadlocks, 0);
        assert!(r.completed >= 1);
    }

    #[test]
    fn two_process_one_bit_algorithm_is_safe() {
        let w = Workload::from_sessions(&[vec![1], vec![2]], 1).unwrap();
        let r = explore(build_bl(2).unwrap(), &w, &ExploreConfig::default()).unwrap();
        assert_eq!(r.violations_of(Property::MutualExclusion), 0);
        assert_eq!(r.deadlocks, 0);
    }

    #[test]
    fn state_cap_truncates() {
        let w = Workload::from_sessions(&[vec![1], vec![2]], 1).unwrap();
        let cfg = ExploreConfig {
            max_states: 10,
            ..ExploreConfig::default()
        };
        let r = explore(build_glb(2).unwrap(), &w, &cfg).unwrap();
        assert!(r.truncated);
        assert!(r.states <= 10);
    }
}
