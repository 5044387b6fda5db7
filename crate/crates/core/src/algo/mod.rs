//! The three algorithms and the ordering helpers they share.

mod bl;
mod bwbgme;
mod glb;

use std::sync::Arc;

pub use bl::{block_events, BlockCounts, BurnsLamport};
pub use bwbgme::{opposite_color_scan, BwVariant, BwBakery};
pub use glb::GeneralizedBakery;

use crate::error::{Result, SimError};
use crate::machine::{Algorithm, AlgorithmKind};
use crate::memcc::{Color, Pid};

/// `(token number, pid)` pair compared lexicographically.
pub type TicketKey = (u64, Pid);

pub fn token_less(a: TicketKey, b: TicketKey) -> bool {
    a < b
}

/// Committed token of a process as seen by a priority comparison.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PriorityKey {
    pub color: Color,
    pub number: u64,
    pub pid: Pid,
}

/// Whether `me` goes before the conflicting `other` given the current
/// global color: a token whose color differs from `global` wins; equal
/// colors fall back to `(number, pid)` order.
pub fn has_priority(me: PriorityKey, other: PriorityKey, global: Color) -> bool {
    if me.color != other.color {
        me.color != global
    } else {
        token_less((me.number, me.pid), (other.number, other.pid))
    }
}

/// Opposite of a token color; the unset color has none.
pub fn opposite_color(c: Option<Color>) -> Result<Color> {
    c.map(Color::opposite).ok_or(SimError::UndefinedColor)
}

fn check_n(n: usize) -> Result<()> {
    if n == 0 {
        return Err(SimError::Config("at least one process is required".into()));
    }
    Ok(())
}

pub fn build_glb(n: usize) -> Result<Arc<dyn Algorithm>> {
    Ok(Arc::new(GeneralizedBakery::new(n)?))
}

pub fn build_bwbgme(n: usize, initial: Color) -> Result<Arc<dyn Algorithm>> {
    Ok(Arc::new(BwBakery::new(n, initial, BwVariant::default())?))
}

pub fn build_bl(n: usize) -> Result<Arc<dyn Algorithm>> {
    Ok(Arc::new(BurnsLamport::new(n)?))
}

/// Builds any algorithm by kind. `initial` is only used by the
/// black-and-white bakery and defaults to white.
pub fn build(kind: AlgorithmKind, n: usize, initial: Option<Color>) -> Result<Arc<dyn Algorithm>> {
    match kind {
        AlgorithmKind::Glb => build_glb(n),
        AlgorithmKind::Bwbgme => build_bwbgme(n, initial.unwrap_or(Color::White)),
        AlgorithmKind::Bl => build_bl(n),
    }
}
