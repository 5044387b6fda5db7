use thiserror::Error;

use crate::memcc::RegisterId;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SimError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("register {0} is not declared by the loaded algorithm")]
    UnknownRegister(RegisterId),

    #[error("kind mismatch writing {reg}: declared {expected}, got {found}")]
    KindMismatch {
        reg: RegisterId,
        expected: &'static str,
        found: &'static str,
    },

    #[error("unbounded integer overflowed its 64-bit representation at {0}")]
    Overflow(RegisterId),

    #[error("state handle does not belong to this memory layout")]
    StaleHandle,

    #[error("opposite color is undefined for an unset (bottom) token color")]
    UndefinedColor,

    #[error("process index {0} is outside 1..={1}")]
    InvalidPid(usize, usize),

    #[error("more than one shared access attempted in a single step at {0}")]
    DoubleAccess(RegisterId),

    #[error("scripted schedule could not reach its milestone: {0}")]
    Script(String),

    #[error("trace was produced by {found}, expected {expected}")]
    WrongAlgorithm {
        expected: &'static str,
        found: &'static str,
    },
}

pub type Result<T, E = SimError> = std::result::Result<T, E>;
