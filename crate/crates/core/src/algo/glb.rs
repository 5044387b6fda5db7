//! Generalized bakery for group mutual exclusion: Lamport's bakery with a
//! per-process session register so that processes requesting the same
//! session do not wait on each other.

use crate::error::{Result, SimError};
use crate::machine::{Algorithm, AlgorithmKind, Bus, Flow, LocalEnv, Outcome, Pc, Section};
use crate::memcc::{CellValue, Family, Pid, RegisterId};

use super::{check_n, token_less};

const REMAINDER: u8 = 2;
const SET_CHOOSING: u8 = 3;
const ANNOUNCE_SESSION: u8 = 4;
const TAKE_TICKET: u8 = 5;
const CLEAR_CHOOSING: u8 = 6;
const WAIT_CHOOSING: u8 = 8;
const WAIT_TICKET: u8 = 9;
const CS: u8 = 11;
const RELEASE_TICKET: u8 = 12;
const RELEASE_SESSION: u8 = 13;

#[derive(Clone, Debug)]
pub struct GeneralizedBakery {
    n: usize,
}

impl GeneralizedBakery {
    pub fn new(n: usize) -> Result<Self> {
        check_n(n)?;
        Ok(GeneralizedBakery { n })
    }

    /// Next loop index after `j`, skipping `me`.
    fn next_other(j: usize, me: Pid) -> usize {
        if j + 1 == me.get() {
            j + 2
        } else {
            j + 1
        }
    }

    /// Advances the waiting-room loop after index `j` passed.
    fn pass(&self, env: &mut LocalEnv, line: u8, j: usize) -> Outcome {
        env.j = j + 1;
        if env.j > self.n {
            Outcome::on(line, j).flow(Flow::EnterCs)
        } else {
            env.goto(WAIT_CHOOSING);
            Outcome::on(line, j)
        }
    }
}

fn compatible(session: u64, mine: u64) -> bool {
    session == 0 || session == mine
}

impl Algorithm for GeneralizedBakery {
    fn kind(&self) -> AlgorithmKind {
        AlgorithmKind::Glb
    }

    fn n(&self) -> usize {
        self.n
    }

    fn declarations(&self) -> Vec<(RegisterId, CellValue)> {
        let mut decls = Vec::with_capacity(3 * self.n);
        for (family, init) in [
            (Family::Session, CellValue::Int(0)),
            (Family::Token, CellValue::Int(0)),
            (Family::Choosing, CellValue::Bool(false)),
        ] {
            decls.extend(Pid::all(self.n).map(|p| (RegisterId::at(family, p), init)));
        }
        decls
    }

    fn section(&self, pc: Pc) -> Section {
        match pc.line {
            0..=2 => Section::Remainder,
            3..=6 => Section::Doorway,
            7..=10 => Section::Waiting,
            11 => Section::Cs,
            _ => Section::Exit,
        }
    }

    fn is_wait_line(&self, line: u8) -> bool {
        matches!(line, WAIT_CHOOSING | WAIT_TICKET)
    }

    fn remainder_pc(&self) -> Pc {
        Pc::at(REMAINDER)
    }

    fn entry_pc(&self) -> Pc {
        Pc::at(SET_CHOOSING)
    }

    fn cs_pc(&self) -> Pc {
        Pc::at(CS)
    }

    fn exit_pc(&self) -> Pc {
        Pc::at(RELEASE_TICKET)
    }

    fn execute(&self, me: Pid, env: &mut LocalEnv, bus: &mut Bus<'_>) -> Result<Outcome> {
        let line = env.pc.line;
        match line {
            SET_CHOOSING => {
                bus.write(RegisterId::choosing(me), CellValue::Bool(true))?;
                env.goto(ANNOUNCE_SESSION);
                Ok(Outcome::at(line))
            }
            ANNOUNCE_SESSION => {
                bus.write(RegisterId::session(me), CellValue::Int(env.mysession))?;
                env.mynumber = 0;
                env.j = Self::next_other(0, me);
                env.goto(TAKE_TICKET);
                Ok(Outcome::at(line))
            }
            TAKE_TICKET if env.j <= self.n => {
                let j = env.j;
                let t = bus.read_int(RegisterId::token(Pid(j)))?;
                env.mynumber = env.mynumber.max(t);
                env.j = Self::next_other(j, me);
                Ok(Outcome::on(line, j))
            }
            TAKE_TICKET => {
                let reg = RegisterId::token(me);
                let t = env.mynumber.checked_add(1).ok_or(SimError::Overflow(reg))?;
                bus.write(reg, CellValue::Int(t))?;
                env.mynumber = t;
                env.goto(CLEAR_CHOOSING);
                Ok(Outcome::at(line))
            }
            CLEAR_CHOOSING => {
                bus.write(RegisterId::choosing(me), CellValue::Bool(false))?;
                env.j = 1;
                env.goto(WAIT_CHOOSING);
                Ok(Outcome::at(line).flow(Flow::DoorwayDone))
            }
            WAIT_CHOOSING => {
                let j = env.j;
                let other = Pid(j);
                if env.pc.phase == 0 {
                    if !bus.read_bool(RegisterId::choosing(other))? {
                        env.goto(WAIT_TICKET);
                    } else {
                        env.pc.phase = 1;
                    }
                    return Ok(Outcome::on(line, j));
                }
                let s = bus.read_int(RegisterId::session(other))?;
                if compatible(s, env.mysession) {
                    env.goto(WAIT_TICKET);
                    Ok(Outcome::on(line, j))
                } else {
                    env.pc.phase = 0;
                    Ok(Outcome::on(line, j).waiting())
                }
            }
            WAIT_TICKET => {
                let j = env.j;
                let other = Pid(j);
                match env.pc.phase {
                    0 => {
                        env.mynumber = bus.read_int(RegisterId::token(me))?;
                        env.pc.phase = 1;
                        Ok(Outcome::on(line, j))
                    }
                    1 => {
                        let t = bus.read_int(RegisterId::token(other))?;
                        env.other.number = t;
                        if t == 0 || token_less((env.mynumber, me), (t, other)) {
                            Ok(self.pass(env, line, j))
                        } else {
                            env.pc.phase = 2;
                            Ok(Outcome::on(line, j))
                        }
                    }
                    _ => {
                        let s = bus.read_int(RegisterId::session(other))?;
                        if compatible(s, env.mysession) {
                            Ok(self.pass(env, line, j))
                        } else {
                            env.pc.phase = 0;
                            Ok(Outcome::on(line, j).waiting())
                        }
                    }
                }
            }
            RELEASE_TICKET => {
                bus.write(RegisterId::token(me), CellValue::Int(0))?;
                env.goto(RELEASE_SESSION);
                Ok(Outcome::at(line))
            }
            RELEASE_SESSION => {
                bus.write(RegisterId::session(me), CellValue::Int(0))?;
                Ok(Outcome::at(line).flow(Flow::ExitDone))
            }
            other => Err(SimError::Config(format!(
                "generalized bakery has no executable line {other}"
            ))),
        }
    }

    fn exit_access_bound(&self) -> usize {
        2
    }
}
