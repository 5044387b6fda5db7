//! Global memory module, per-process caches and remote-memory-reference
//! accounting for the cache-coherent (CC) cost model.
//!
//! A read hits the reader's cache when it holds a valid copy and costs no
//! RMR; otherwise it fetches the global value, costs one RMR and installs a
//! copy. Every write goes to the global module, costs one RMR, invalidates
//! the copies held by every other process and leaves the writer holding a
//! valid copy of the value it wrote. Caches have unbounded capacity.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};

/// Process identifier, 1-based.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Pid(pub usize);

impl Pid {
    pub fn get(self) -> usize {
        self.0
    }

    /// Zero-based slot for per-process vectors.
    pub fn index(self) -> usize {
        self.0 - 1
    }

    pub fn from_index(i: usize) -> Self {
        Pid(i + 1)
    }

    pub fn all(n: usize) -> impl Iterator<Item = Pid> {
        (1..=n).map(Pid)
    }
}

impl fmt::Display for Pid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "P{}", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Color {
    Black,
    White,
}

impl Color {
    pub fn opposite(self) -> Color {
        match self {
            Color::Black => Color::White,
            Color::White => Color::Black,
        }
    }
}

impl fmt::Display for Color {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Color::Black => "black",
            Color::White => "white",
        })
    }
}

/// The colored ticket held in one register. `color == None` is the unset
/// color (bottom).
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Token {
    pub session: u64,
    pub color: Option<Color>,
    pub number: u64,
}

impl Token {
    pub const EMPTY: Token = Token {
        session: 0,
        color: None,
        number: 0,
    };

    pub fn new(session: u64, color: Option<Color>, number: u64) -> Self {
        Token {
            session,
            color,
            number,
        }
    }
}

impl fmt::Display for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.color {
            Some(c) => write!(f, "({}, {}, {})", self.session, c, self.number),
            None => write!(f, "({}, ⊥, {})", self.session, self.number),
        }
    }
}

/// Content of one shared register. Every variant is read and written as a
/// single atomic unit.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "lowercase")]
pub enum CellValue {
    Int(u64),
    Bool(bool),
    Color(Color),
    Triple(Token),
}

impl CellValue {
    pub fn kind_name(&self) -> &'static str {
        match self {
            CellValue::Int(_) => "int",
            CellValue::Bool(_) => "bool",
            CellValue::Color(_) => "color",
            CellValue::Triple(_) => "triple",
        }
    }

    pub fn as_int(&self) -> Option<u64> {
        match *self {
            CellValue::Int(v) => Some(v),
            _ => None,
        }
    }

    pub fn as_bool(&self) -> Option<bool> {
        match *self {
            CellValue::Bool(v) => Some(v),
            _ => None,
        }
    }

    pub fn as_color(&self) -> Option<Color> {
        match *self {
            CellValue::Color(v) => Some(v),
            _ => None,
        }
    }

    pub fn as_token(&self) -> Option<Token> {
        match *self {
            CellValue::Triple(v) => Some(v),
            _ => None,
        }
    }

    fn same_kind(&self, other: &CellValue) -> bool {
        std::mem::discriminant(self) == std::mem::discriminant(other)
    }
}

impl fmt::Display for CellValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CellValue::Int(v) => write!(f, "{v}"),
            CellValue::Bool(v) => write!(f, "{v}"),
            CellValue::Color(c) => write!(f, "{c}"),
            CellValue::Triple(t) => write!(f, "{t}"),
        }
    }
}

/// Register families used by the three algorithms.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Family {
    Session,
    Token,
    Choosing,
    GlobalColor,
    Competing,
}

impl Family {
    const ALL: [Family; 5] = [
        Family::Session,
        Family::Token,
        Family::Choosing,
        Family::GlobalColor,
        Family::Competing,
    ];

    pub fn is_array(self) -> bool {
        self != Family::GlobalColor
    }

    fn slot(self) -> usize {
        self as usize
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RegisterId {
    pub family: Family,
    /// 1-based array index; `None` for the scalar `GlobalColor`.
    pub index: Option<usize>,
}

impl RegisterId {
    pub fn at(family: Family, pid: Pid) -> Self {
        RegisterId {
            family,
            index: Some(pid.get()),
        }
    }

    pub fn scalar(family: Family) -> Self {
        RegisterId {
            family,
            index: None,
        }
    }

    pub fn session(p: Pid) -> Self {
        Self::at(Family::Session, p)
    }
    pub fn token(p: Pid) -> Self {
        Self::at(Family::Token, p)
    }
    pub fn choosing(p: Pid) -> Self {
        Self::at(Family::Choosing, p)
    }
    pub fn competing(p: Pid) -> Self {
        Self::at(Family::Competing, p)
    }
    pub fn global_color() -> Self {
        Self::scalar(Family::GlobalColor)
    }
}

impl fmt::Display for RegisterId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.index {
            Some(i) => write!(f, "{:?}[{}]", self.family, i),
            None => write!(f, "{:?}", self.family),
        }
    }
}

/// Register declarations plus the dense slot numbering derived from them.
#[derive(Debug, PartialEq, Eq)]
pub struct Layout {
    n: usize,
    decls: Vec<(RegisterId, CellValue)>,
    base: [Option<usize>; 5],
}

impl Layout {
    /// Arrays must be declared whole (indices 1..=n, in order) and scalars
    /// without an index.
    pub fn new(n: usize, decls: Vec<(RegisterId, CellValue)>) -> Result<Self> {
        if n == 0 {
            return Err(SimError::Config("process count must be at least 1".into()));
        }
        let mut base = [None; 5];
        let mut i = 0;
        while i < decls.len() {
            let (reg, _) = decls[i];
            let fam = reg.family;
            if base[fam.slot()].is_some() {
                return Err(SimError::Config(format!("{fam:?} declared twice")));
            }
            base[fam.slot()] = Some(i);
            if fam.is_array() {
                for k in 0..n {
                    match decls.get(i + k) {
                        Some((r, _)) if r.family == fam && r.index == Some(k + 1) => {}
                        _ => {
                            return Err(SimError::Config(format!(
                                "{fam:?} must declare indices 1..={n} in order"
                            )))
                        }
                    }
                }
                let kind = decls[i].1;
                if decls[i..i + n].iter().any(|(_, v)| !v.same_kind(&kind)) {
                    return Err(SimError::Config(format!("{fam:?} mixes value kinds")));
                }
                i += n;
            } else {
                if reg.index.is_some() {
                    return Err(SimError::Config(format!("{fam:?} is scalar")));
                }
                i += 1;
            }
        }
        Ok(Layout { n, decls, base })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.decls.len()
    }

    pub fn is_empty(&self) -> bool {
        self.decls.is_empty()
    }

    pub fn declarations(&self) -> &[(RegisterId, CellValue)] {
        &self.decls
    }

    pub fn slot(&self, reg: RegisterId) -> Result<usize> {
        let base = self.base[reg.family.slot()].ok_or(SimError::UnknownRegister(reg))?;
        match (reg.family.is_array(), reg.index) {
            (true, Some(i)) if (1..=self.n).contains(&i) => Ok(base + i - 1),
            (false, None) => Ok(base),
            _ => Err(SimError::UnknownRegister(reg)),
        }
    }

    pub fn register(&self, slot: usize) -> RegisterId {
        self.decls[slot].0
    }

    pub fn families(&self) -> impl Iterator<Item = Family> + '_ {
        Family::ALL
            .into_iter()
            .filter(|f| self.base[f.slot()].is_some())
    }
}

/// Per-process RMR totals, split into reads and writes.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct RmrLedger {
    remote_reads: Vec<u64>,
    writes: Vec<u64>,
}

impl RmrLedger {
    fn new(n: usize) -> Self {
        RmrLedger {
            remote_reads: vec![0; n],
            writes: vec![0; n],
        }
    }

    pub fn total(&self, pid: Pid) -> u64 {
        self.remote_reads[pid.index()] + self.writes[pid.index()]
    }

    pub fn remote_reads(&self, pid: Pid) -> u64 {
        self.remote_reads[pid.index()]
    }

    pub fn writes(&self, pid: Pid) -> u64 {
        self.writes[pid.index()]
    }

    pub fn grand_total(&self) -> u64 {
        self.remote_reads.iter().sum::<u64>() + self.writes.iter().sum::<u64>()
    }
}

/// Opaque copy of a [`Memory`]'s store, caches and ledger.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StateHandle {
    layout: Arc<Layout>,
    store: Vec<CellValue>,
    cache: Vec<Option<CellValue>>,
    ledger: RmrLedger,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Memory {
    layout: Arc<Layout>,
    store: Vec<CellValue>,
    /// `cache[p * slots + s]` is process p's copy of slot s, if valid.
    cache: Vec<Option<CellValue>>,
    ledger: RmrLedger,
}

impl Memory {
    pub fn new(layout: Arc<Layout>) -> Self {
        let store: Vec<CellValue> = layout.decls.iter().map(|(_, v)| *v).collect();
        let n = layout.n;
        Memory {
            cache: vec![None; n * store.len()],
            ledger: RmrLedger::new(n),
            store,
            layout,
        }
    }

    pub fn from_declarations(n: usize, decls: Vec<(RegisterId, CellValue)>) -> Result<Self> {
        Ok(Self::new(Arc::new(Layout::new(n, decls)?)))
    }

    pub fn layout(&self) -> &Arc<Layout> {
        &self.layout
    }

    pub fn n(&self) -> usize {
        self.layout.n
    }

    fn check_pid(&self, pid: Pid) -> Result<()> {
        if pid.0 == 0 || pid.0 > self.layout.n {
            return Err(SimError::InvalidPid(pid.0, self.layout.n));
        }
        Ok(())
    }

    fn cache_index(&self, pid: Pid, slot: usize) -> usize {
        pid.index() * self.store.len() + slot
    }

    /// Shared read by `pid`. Returns the value and whether it cost an RMR.
    pub fn read(&mut self, pid: Pid, reg: RegisterId) -> Result<(CellValue, bool)> {
        self.check_pid(pid)?;
        let slot = self.layout.slot(reg)?;
        let ci = self.cache_index(pid, slot);
        if let Some(v) = self.cache[ci] {
            return Ok((v, false));
        }
        let v = self.store[slot];
        self.cache[ci] = Some(v);
        self.ledger.remote_reads[pid.index()] += 1;
        Ok((v, true))
    }

    /// Shared write by `pid`; always one RMR.
    pub fn write(&mut self, pid: Pid, reg: RegisterId, v: CellValue) -> Result<()> {
        self.check_pid(pid)?;
        let slot = self.layout.slot(reg)?;
        let declared = self.store[slot];
        if !declared.same_kind(&v) {
            return Err(SimError::KindMismatch {
                reg,
                expected: declared.kind_name(),
                found: v.kind_name(),
            });
        }
        self.store[slot] = v;
        let width = self.store.len();
        for p in 0..self.layout.n {
            self.cache[p * width + slot] = None;
        }
        let ci = self.cache_index(pid, slot);
        self.cache[ci] = Some(v);
        self.ledger.writes[pid.index()] += 1;
        Ok(())
    }

    /// Global value without touching any cache or the ledger.
    pub fn peek(&self, reg: RegisterId) -> Result<CellValue> {
        Ok(self.store[self.layout.slot(reg)?])
    }

    pub fn is_cached(&self, pid: Pid, reg: RegisterId) -> Result<bool> {
        self.check_pid(pid)?;
        let slot = self.layout.slot(reg)?;
        Ok(self.cache[self.cache_index(pid, slot)].is_some())
    }

    pub fn values(&self) -> &[CellValue] {
        &self.store
    }

    pub fn ledger(&self) -> &RmrLedger {
        &self.ledger
    }

    /// Every valid cached copy equals the global value. Returns the first
    /// offending (process, register) otherwise.
    pub fn check_coherence(&self) -> std::result::Result<(), (Pid, RegisterId)> {
        let width = self.store.len();
        for (ci, copy) in self.cache.iter().enumerate() {
            if let Some(v) = copy {
                let slot = ci % width;
                if *v != self.store[slot] {
                    return Err((Pid::from_index(ci / width), self.layout.register(slot)));
                }
            }
        }
        Ok(())
    }

    pub fn snapshot(&self) -> StateHandle {
        StateHandle {
            layout: Arc::clone(&self.layout),
            store: self.store.clone(),
            cache: self.cache.clone(),
            ledger: self.ledger.clone(),
        }
    }

    pub fn restore(&mut self, h: &StateHandle) -> Result<()> {
        if !Arc::ptr_eq(&h.layout, &self.layout) && *h.layout != *self.layout {
            return Err(SimError::StaleHandle);
        }
        self.store.clone_from(&h.store);
        self.cache.clone_from(&h.cache);
        self.ledger.clone_from(&h.ledger);
        Ok(())
    }
}
