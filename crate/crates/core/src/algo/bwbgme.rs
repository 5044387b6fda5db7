//! Black-and-white bakery for group mutual exclusion. Tokens carry a color
//! taken from a shared global color; exiting processes flip the global
//! color, which keeps token numbers bounded by N+1.

use crate::error::{Result, SimError};
use crate::machine::{
    Algorithm, AlgorithmKind, Bus, Flow, LocalEnv, Outcome, Pc, Section, SystemState,
};
use crate::memcc::{CellValue, Color, Family, Pid, RegisterId, Token};

use super::{check_n, token_less};

const REMAINDER: u8 = 2;
const ANNOUNCE: u8 = 3;
const SET_CHOOSING: u8 = 4;
const READ_COLOR: u8 = 5;
const SCAN_NUMBERS: u8 = 8;
const COMMIT: u8 = 14;
const CLEAR_CHOOSING: u8 = 15;
const WAIT_CHOOSING: u8 = 17;
const READ_COLOR_OF_J: u8 = 18;
const WAIT_SAME_COLOR: u8 = 19;
const WAIT_OTHER_COLOR: u8 = 21;
const CS: u8 = 24;
const EXIT_GUARD: u8 = 25;
const SCAN_OPPOSITE: u8 = 26;
const FLIP_TO_WHITE: u8 = 28;
const FLIP_TO_BLACK: u8 = 30;
const RESET: u8 = 34;

/// Exit-section mutations used to check that monitors catch the unsafe
/// behavior they are supposed to catch. The default is the real algorithm.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub struct BwVariant {
    /// Flip the global color even when holding token number 1.
    pub skip_number_guard: bool,
    /// Flip without scanning for active opposite-color tokens.
    pub skip_opposite_check: bool,
}

impl BwVariant {
    pub const NAIVE: BwVariant = BwVariant {
        skip_number_guard: true,
        skip_opposite_check: true,
    };
}

#[derive(Clone, Debug)]
pub struct BwBakery {
    n: usize,
    initial: Color,
    variant: BwVariant,
}

impl BwBakery {
    pub fn new(n: usize, initial: Color, variant: BwVariant) -> Result<Self> {
        check_n(n)?;
        Ok(BwBakery {
            n,
            initial,
            variant,
        })
    }

    pub fn variant(&self) -> BwVariant {
        self.variant
    }

    fn pass(&self, env: &mut LocalEnv, line: u8, j: usize) -> Outcome {
        env.j = j + 1;
        if env.j > self.n {
            Outcome::on(line, j).flow(Flow::EnterCs)
        } else {
            env.goto(WAIT_CHOOSING);
            Outcome::on(line, j)
        }
    }

    /// Same-color wait goes to line 19, different color to line 21.
    fn branch(env: &mut LocalEnv, t: Token) {
        env.other = t;
        if t.color == Some(env.mycolor) {
            env.goto(WAIT_SAME_COLOR);
        } else {
            env.goto(WAIT_OTHER_COLOR);
        }
    }

    fn flip_line(mycolor: Color) -> u8 {
        match mycolor {
            Color::Black => FLIP_TO_WHITE,
            Color::White => FLIP_TO_BLACK,
        }
    }
}

fn inactive_or_same(session: u64, mine: u64) -> bool {
    session == 0 || session == mine
}

/// Whether any active token has the color opposite to `pid`'s own,
/// evaluated on the global values without charging any access.
pub fn opposite_color_scan(state: &SystemState, pid: Pid) -> Result<bool> {
    let n = state.procs.len();
    if pid.0 == 0 || pid.0 > n {
        return Err(SimError::InvalidPid(pid.0, n));
    }
    let wanted = state.proc(pid).env.mycolor.opposite();
    for j in Pid::all(n) {
        let reg = RegisterId::token(j);
        let v = state.mem.peek(reg)?;
        let t = v.as_token().ok_or(SimError::KindMismatch {
            reg,
            expected: "triple",
            found: v.kind_name(),
        })?;
        if t.session != 0 && t.color == Some(wanted) {
            return Ok(true);
        }
    }
    Ok(false)
}

impl Algorithm for BwBakery {
    fn kind(&self) -> AlgorithmKind {
        AlgorithmKind::Bwbgme
    }

    fn n(&self) -> usize {
        self.n
    }

    fn declarations(&self) -> Vec<(RegisterId, CellValue)> {
        let mut decls = Vec::with_capacity(2 * self.n + 1);
        decls.push((RegisterId::global_color(), CellValue::Color(self.initial)));
        decls.extend(
            Pid::all(self.n).map(|p| (RegisterId::token(p), CellValue::Triple(Token::EMPTY))),
        );
        decls.extend(
            Pid::all(self.n).map(|p| (RegisterId::at(Family::Choosing, p), CellValue::Bool(false))),
        );
        decls
    }

    fn initial_color(&self) -> Option<Color> {
        Some(self.initial)
    }

    fn section(&self, pc: Pc) -> Section {
        match pc.line {
            0..=2 => Section::Remainder,
            3..=15 => Section::Doorway,
            16..=23 => Section::Waiting,
            24 => Section::Cs,
            _ => Section::Exit,
        }
    }

    fn is_wait_line(&self, line: u8) -> bool {
        matches!(line, WAIT_CHOOSING | WAIT_SAME_COLOR | WAIT_OTHER_COLOR)
    }

    fn remainder_pc(&self) -> Pc {
        Pc::at(REMAINDER)
    }

    fn entry_pc(&self) -> Pc {
        Pc::at(ANNOUNCE)
    }

    fn cs_pc(&self) -> Pc {
        Pc::at(CS)
    }

    fn exit_pc(&self) -> Pc {
        Pc::at(EXIT_GUARD)
    }

    fn execute(&self, me: Pid, env: &mut LocalEnv, bus: &mut Bus<'_>) -> Result<Outcome> {
        if env.pc.line == EXIT_GUARD {
            if !self.variant.skip_number_guard && env.mynumber == 1 {
                env.goto(RESET);
            } else if !self.variant.skip_opposite_check {
                env.j = 1;
                env.goto(SCAN_OPPOSITE);
            } else {
                env.goto(Self::flip_line(env.mycolor));
            }
        }
        let line = env.pc.line;
        match line {
            ANNOUNCE => {
                let t = Token::new(env.mysession, None, 0);
                bus.write(RegisterId::token(me), CellValue::Triple(t))?;
                env.goto(SET_CHOOSING);
                Ok(Outcome::at(line))
            }
            SET_CHOOSING => {
                bus.write(RegisterId::choosing(me), CellValue::Bool(true))?;
                env.goto(READ_COLOR);
                Ok(Outcome::at(line))
            }
            READ_COLOR => {
                env.mycolor = bus.read_color(RegisterId::global_color())?;
                env.mynumber = 0;
                env.j = 1;
                env.goto(SCAN_NUMBERS);
                Ok(Outcome::at(line))
            }
            SCAN_NUMBERS => {
                let j = env.j;
                let t = bus.read_token(RegisterId::token(Pid(j)))?;
                env.other = t;
                if t.color == Some(env.mycolor) && !inactive_or_same(t.session, env.mysession) {
                    env.mynumber = env.mynumber.max(t.number);
                }
                env.j += 1;
                if env.j > self.n {
                    env.goto(COMMIT);
                }
                Ok(Outcome::on(line, j))
            }
            COMMIT => {
                let reg = RegisterId::token(me);
                let number = env.mynumber.checked_add(1).ok_or(SimError::Overflow(reg))?;
                env.mynumber = number;
                let t = Token::new(env.mysession, Some(env.mycolor), number);
                bus.write(reg, CellValue::Triple(t))?;
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
                if env.pc.phase == 0 {
                    if !bus.read_bool(RegisterId::choosing(Pid(j)))? {
                        env.goto(READ_COLOR_OF_J);
                    } else {
                        env.pc.phase = 1;
                    }
                    return Ok(Outcome::on(line, j));
                }
                let t = bus.read_token(RegisterId::token(Pid(j)))?;
                if t.session == env.mysession {
                    Self::branch(env, t);
                    Ok(Outcome::on(line, j))
                } else {
                    env.pc.phase = 0;
                    Ok(Outcome::on(line, j).waiting())
                }
            }
            READ_COLOR_OF_J => {
                let j = env.j;
                let t = bus.read_token(RegisterId::token(Pid(j)))?;
                Self::branch(env, t);
                Ok(Outcome::on(line, j))
            }
            WAIT_SAME_COLOR => {
                let j = env.j;
                let other = Pid(j);
                let t = bus.read_token(RegisterId::token(other))?;
                env.other = t;
                if token_less((env.mynumber, me), (t.number, other))
                    || t.color != Some(env.mycolor)
                    || inactive_or_same(t.session, env.mysession)
                {
                    Ok(self.pass(env, line, j))
                } else {
                    Ok(Outcome::on(line, j).waiting())
                }
            }
            WAIT_OTHER_COLOR => {
                let j = env.j;
                if env.pc.phase == 0 {
                    let g = bus.read_color(RegisterId::global_color())?;
                    if g != env.mycolor {
                        return Ok(self.pass(env, line, j));
                    }
                    env.pc.phase = 1;
                    return Ok(Outcome::on(line, j));
                }
                let t = bus.read_token(RegisterId::token(Pid(j)))?;
                env.other = t;
                if t.color == Some(env.mycolor) || inactive_or_same(t.session, env.mysession) {
                    Ok(self.pass(env, line, j))
                } else {
                    env.pc.phase = 0;
                    Ok(Outcome::on(line, j).waiting())
                }
            }
            SCAN_OPPOSITE => {
                let j = env.j;
                let t = bus.read_token(RegisterId::token(Pid(j)))?;
                if t.session != 0 && t.color == Some(env.mycolor.opposite()) {
                    env.goto(RESET);
                } else {
                    env.j += 1;
                    if env.j > self.n {
                        env.goto(Self::flip_line(env.mycolor));
                    }
                }
                Ok(Outcome::on(line, j))
            }
            FLIP_TO_WHITE | FLIP_TO_BLACK => {
                bus.write(
                    RegisterId::global_color(),
                    CellValue::Color(env.mycolor.opposite()),
                )?;
                env.goto(RESET);
                Ok(Outcome::at(line))
            }
            RESET => {
                bus.write(RegisterId::token(me), CellValue::Triple(Token::EMPTY))?;
                Ok(Outcome::at(line).flow(Flow::ExitDone))
            }
            other => Err(SimError::Config(format!(
                "black-and-white bakery has no executable line {other}"
            ))),
        }
    }

    fn exit_access_bound(&self) -> usize {
        self.n + 2
    }
}
