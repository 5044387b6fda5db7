//! Schedule sources: scripted pid lists, seeded fair random streams, round
//! robin, milestone-driven scripts and the exhaustive explorer.

mod explore;
mod script;

use std::collections::VecDeque;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use explore::{explore, Counterexample, ExploreConfig, ExplorationReport};
pub use script::{
    bl_adversarial_schedule, bl_adversarial_workload, bw_hanging_reader_plan,
    bw_overtake_narrative_plan, Directive, ScriptPlan, Until,
};

use crate::error::{Result, SimError};
use crate::machine::Machine;
use crate::memcc::Pid;

/// Picks the next process to step.
pub trait Scheduler {
    /// `None` ends the run.
    fn next_pid(&mut self, machine: &Machine) -> Option<Pid>;
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Schedule {
    /// Exactly these pids, in order; finished processes take no-op steps.
    Scripted { pids: Vec<Pid> },
    /// Seeded stream in which every process appears in every block of
    /// `window` consecutive picks.
    Random { seed: u64, window: usize },
    RoundRobin,
}

pub fn random_schedule(seed: u64, window: usize) -> Schedule {
    Schedule::Random { seed, window }
}

impl Schedule {
    pub fn scheduler(&self, n: usize) -> Result<Box<dyn Scheduler>> {
        match self {
            Schedule::Scripted { pids } => {
                if let Some(bad) = pids.iter().find(|p| p.0 == 0 || p.0 > n) {
                    return Err(SimError::InvalidPid(bad.0, n));
                }
                Ok(Box::new(Scripted::new(pids.clone())))
            }
            Schedule::Random { seed, window } => Ok(Box::new(FairRandom::new(*seed, n, *window)?)),
            Schedule::RoundRobin => Ok(Box::new(RoundRobin::default())),
        }
    }
}

pub struct Scripted {
    pids: std::vec::IntoIter<Pid>,
}

impl Scripted {
    pub fn new(pids: Vec<Pid>) -> Self {
        Scripted {
            pids: pids.into_iter(),
        }
    }
}

impl Scheduler for Scripted {
    fn next_pid(&mut self, _: &Machine) -> Option<Pid> {
        self.pids.next()
    }
}

/// Round robin over processes that still have work.
#[derive(Default)]
pub struct RoundRobin {
    last: usize,
}

impl Scheduler for RoundRobin {
    fn next_pid(&mut self, machine: &Machine) -> Option<Pid> {
        let n = machine.n();
        (1..=n)
            .map(|k| Pid((self.last + k - 1) % n + 1))
            .find(|&p| !machine.is_finished(p))
            .inspect(|p| self.last = p.0)
    }
}

/// Deterministic pid stream in blocks of `window` picks: each block holds
/// every pid once plus `window - n` uniform picks, shuffled.
pub struct PidStream {
    rng: ChaCha8Rng,
    n: usize,
    window: usize,
    buf: VecDeque<Pid>,
}

impl PidStream {
    pub fn new(seed: u64, n: usize, window: usize) -> Result<Self> {
        if n == 0 || window < n {
            return Err(SimError::Config(format!(
                "fairness window {window} must be at least the process count {n}"
            )));
        }
        Ok(PidStream {
            rng: ChaCha8Rng::seed_from_u64(seed),
            n,
            window,
            buf: VecDeque::with_capacity(window),
        })
    }

    fn refill(&mut self) {
        let mut block: Vec<Pid> = Pid::all(self.n).collect();
        for _ in self.n..self.window {
            block.push(Pid(self.rng.random_range(1..=self.n)));
        }
        block.shuffle(&mut self.rng);
        self.buf.extend(block);
    }
}

impl Iterator for PidStream {
    type Item = Pid;

    fn next(&mut self) -> Option<Pid> {
        if self.buf.is_empty() {
            self.refill();
        }
        self.buf.pop_front()
    }
}

/// [`PidStream`] that skips processes with no work left.
pub struct FairRandom {
    stream: PidStream,
}

impl FairRandom {
    pub fn new(seed: u64, n: usize, window: usize) -> Result<Self> {
        Ok(FairRandom {
            stream: PidStream::new(seed, n, window)?,
        })
    }
}

impl Scheduler for FairRandom {
    fn next_pid(&mut self, machine: &Machine) -> Option<Pid> {
        if machine.all_finished() {
            return None;
        }
        self.stream.find(|&p| !machine.is_finished(p))
    }
}
