//! Sequentially consistent shared memory with per-process memory modules.
//!
//! Every access goes through [`Memory::apply`], which performs one atomic
//! primitive and returns the [`Event`] describing it. Locations are word
//! sized and each one lives in the module of exactly one process (its
//! *home*), which is what the DSM cost model keys on.

use std::collections::{BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// A memory word. Booleans are 0/1 and NIL is 0, so process ids start at 1.
pub type Word = i64;

pub const NIL: Word = 0;
pub const FALSE: Word = 0;
pub const TRUE: Word = 1;

/// Process identifier, 1-based.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ProcId(pub u32);

impl ProcId {
    /// Zero-based slot for per-process vectors.
    pub fn index(self) -> usize {
        self.0 as usize - 1
    }

    pub fn from_index(index: usize) -> Self {
        ProcId(index as u32 + 1)
    }

    /// The value a process stores when it publishes its own id.
    pub fn word(self) -> Word {
        Word::from(self.0)
    }
}

impl fmt::Display for ProcId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "p{}", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LocId(pub usize);

/// Identifies a procedure call: the `index`-th call made by `proc`.
///
/// Ids are per process so they survive erasing other processes from a history.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CallId {
    pub proc: ProcId,
    pub index: u32,
}

impl fmt::Display for CallId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}#{}", self.proc, self.index)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Location {
    pub id: LocId,
    pub name: String,
    pub home: ProcId,
    pub init: Word,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum OpKind {
    Read,
    Write,
    Cas,
    Ll,
    Sc,
    Fai,
    Fas,
    Tas,
}

impl OpKind {
    pub const ALL: [OpKind; 8] = [
        OpKind::Read,
        OpKind::Write,
        OpKind::Cas,
        OpKind::Ll,
        OpKind::Sc,
        OpKind::Fai,
        OpKind::Fas,
        OpKind::Tas,
    ];

    /// READ and LL never modify memory; everything else is a nontrivial attempt.
    pub fn is_trivial(self) -> bool {
        matches!(self, OpKind::Read | OpKind::Ll)
    }

    /// Whether the step returns information derived from the location's
    /// current contents. Only a plain WRITE is blind.
    pub fn observes(self) -> bool {
        !matches!(self, OpKind::Write)
    }
}

/// An atomic primitive together with its operands.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Op {
    Read,
    Write { value: Word },
    Cas { expected: Word, new: Word },
    Ll,
    Sc { value: Word },
    Fai,
    Fas { value: Word },
    Tas,
}

impl Op {
    pub fn kind(&self) -> OpKind {
        match self {
            Op::Read => OpKind::Read,
            Op::Write { .. } => OpKind::Write,
            Op::Cas { .. } => OpKind::Cas,
            Op::Ll => OpKind::Ll,
            Op::Sc { .. } => OpKind::Sc,
            Op::Fai => OpKind::Fai,
            Op::Fas { .. } => OpKind::Fas,
            Op::Tas => OpKind::Tas,
        }
    }

    pub fn is_trivial(&self) -> bool {
        self.kind().is_trivial()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Outcome {
    Success,
    Failure,
}

/// One atomic step of one process.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Event {
    pub seq: u64,
    pub proc: ProcId,
    pub op: Op,
    pub loc: LocId,
    /// Home of `loc`, carried so cost classification needs only the event.
    pub home: ProcId,
    pub value_read: Option<Word>,
    pub value_written: Option<Word>,
    pub outcome: Outcome,
    pub call: Option<CallId>,
    pub writer_before: Option<ProcId>,
}

impl Event {
    pub fn modified_memory(&self) -> bool {
        self.value_written.is_some()
    }

    /// `self` read a value last written by `q`.
    pub fn sees(&self, q: ProcId) -> bool {
        self.op.kind().observes() && self.writer_before == Some(q)
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MemoryError {
    #[error("location name {0:?} is already allocated")]
    DuplicateName(String),
    #[error("home {home} is outside 1..={n}")]
    InvalidHome { home: ProcId, n: usize },
    #[error("process {proc} is outside 1..={n}")]
    InvalidProcess { proc: ProcId, n: usize },
    #[error("unknown location {0:?}")]
    UnknownLocation(LocId),
}

/// Values of every location plus the live LL links. Hashable so it can key
/// configuration sets.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct MemoryImage {
    pub values: Vec<Word>,
    pub links: BTreeSet<(ProcId, LocId)>,
}

/// The shared memory of an `n`-process machine.
#[derive(Clone, Debug)]
pub struct Memory {
    n: usize,
    locations: Vec<Location>,
    by_name: HashMap<String, LocId>,
    values: Vec<Word>,
    last_writer: Vec<Option<ProcId>>,
    links: BTreeSet<(ProcId, LocId)>,
    next_seq: u64,
}

impl Memory {
    pub fn new(n: usize) -> Self {
        Memory {
            n,
            locations: Vec::new(),
            by_name: HashMap::new(),
            values: Vec::new(),
            last_writer: Vec::new(),
            links: BTreeSet::new(),
            next_seq: 0,
        }
    }

    pub fn process_count(&self) -> usize {
        self.n
    }

    pub fn alloc(&mut self, name: &str, home: ProcId, init: Word) -> Result<LocId, MemoryError> {
        if home.0 == 0 || home.index() >= self.n {
            return Err(MemoryError::InvalidHome { home, n: self.n });
        }
        if self.by_name.contains_key(name) {
            return Err(MemoryError::DuplicateName(name.to_string()));
        }
        let id = LocId(self.locations.len());
        self.locations.push(Location {
            id,
            name: name.to_string(),
            home,
            init,
        });
        self.by_name.insert(name.to_string(), id);
        self.values.push(init);
        self.last_writer.push(None);
        Ok(id)
    }

    pub fn location(&self, id: LocId) -> Result<&Location, MemoryError> {
        self.locations
            .get(id.0)
            .ok_or(MemoryError::UnknownLocation(id))
    }

    pub fn locations(&self) -> &[Location] {
        &self.locations
    }

    pub fn lookup(&self, name: &str) -> Option<LocId> {
        self.by_name.get(name).copied()
    }

    pub fn home(&self, id: LocId) -> ProcId {
        self.locations[id.0].home
    }

    pub fn value(&self, id: LocId) -> Word {
        self.values[id.0]
    }

    pub fn last_writer(&self, id: LocId) -> Option<ProcId> {
        self.last_writer[id.0]
    }

    pub fn image(&self) -> MemoryImage {
        MemoryImage {
            values: self.values.clone(),
            links: self.links.clone(),
        }
    }

    /// Sequence number the next event will carry.
    pub fn next_seq(&self) -> u64 {
        self.next_seq
    }

    /// Applies one primitive atomically and returns the resulting event.
    pub fn apply(
        &mut self,
        proc: ProcId,
        op: Op,
        loc: LocId,
        call: Option<CallId>,
    ) -> Result<Event, MemoryError> {
        if proc.0 == 0 || proc.index() >= self.n {
            return Err(MemoryError::InvalidProcess { proc, n: self.n });
        }
        let home = self.location(loc)?.home;
        let old = self.values[loc.0];
        let writer_before = self.last_writer[loc.0];

        let (value_read, write, outcome) = match op {
            Op::Read => (Some(old), None, Outcome::Success),
            Op::Write { value } => (None, Some(value), Outcome::Success),
            Op::Cas { expected, new } => {
                if old == expected {
                    (Some(old), Some(new), Outcome::Success)
                } else {
                    (Some(old), None, Outcome::Failure)
                }
            }
            Op::Ll => {
                self.links.insert((proc, loc));
                (Some(old), None, Outcome::Success)
            }
            Op::Sc { value } => {
                if self.links.remove(&(proc, loc)) {
                    (None, Some(value), Outcome::Success)
                } else {
                    (None, None, Outcome::Failure)
                }
            }
            Op::Fai => (Some(old), Some(old + 1), Outcome::Success),
            Op::Fas { value } => (Some(old), Some(value), Outcome::Success),
            Op::Tas => {
                if old == FALSE {
                    (Some(old), Some(TRUE), Outcome::Success)
                } else {
                    (Some(old), None, Outcome::Failure)
                }
            }
        };

        if let Some(new) = write {
            self.values[loc.0] = new;
            self.last_writer[loc.0] = Some(proc);
            self.links.retain(|&(_, l)| l != loc);
        }

        let event = Event {
            seq: self.next_seq,
            proc,
            op,
            loc,
            home,
            value_read,
            value_written: write,
            outcome,
            call,
            writer_before,
        };
        self.next_seq += 1;
        Ok(event)
    }
}

/// The process whose step most recently modified `loc` within `prefix`.
pub fn last_writer(prefix: &[Event], loc: LocId) -> Option<ProcId> {
    prefix
        .iter()
        .rev()
        .find(|e| e.loc == loc && e.modified_memory())
        .map(|e| e.proc)
}

#[cfg(test)]
mod tests {
    use super::*;

    const P1: ProcId = ProcId(1);
    const P2: ProcId = ProcId(2);

    fn mem() -> Memory {
        Memory::new(3)
    }

    #[test]
    fn alloc_registers_location() {
        let mut m = mem();
        let b = m.alloc("B", P1, 0).unwrap();
        let loc = m.location(b).unwrap();
        assert_eq!(loc.home, P1);
        assert_eq!(m.value(b), 0);

        let v2 = m.alloc("V[2]", P2, 0).unwrap();
        assert_eq!(m.home(v2), P2);
        assert_eq!(m.lookup("V[2]"), Some(v2));
    }

    #[test]
    fn alloc_rejects_duplicates_and_bad_homes() {
        let mut m = mem();
        m.alloc("S", P1, 0).unwrap();
        assert_eq!(
            m.alloc("S", P2, 0),
            Err(MemoryError::DuplicateName("S".into()))
        );
        assert!(matches!(
            m.alloc("X", ProcId(4), 0),
            Err(MemoryError::InvalidHome { .. })
        ));
        assert!(matches!(
            m.alloc("Y", ProcId(0), 0),
            Err(MemoryError::InvalidHome { .. })
        ));
    }

    #[test]
    fn write_then_read() {
        let mut m = mem();
        let b = m.alloc("B", P1, 0).unwrap();
        let e = m.apply(P1, Op::Write { value: 1 }, b, None).unwrap();
        assert_eq!(e.value_written, Some(1));
        assert_eq!(e.outcome, Outcome::Success);
        assert_eq!(e.writer_before, None);
        let r = m.apply(P2, Op::Read, b, None).unwrap();
        assert_eq!(r.value_read, Some(1));
        assert_eq!(r.value_written, None);
        assert_eq!(r.writer_before, Some(P1));
        assert_eq!(r.seq, 1);
    }

    #[test]
    fn failed_cas_leaves_memory() {
        let mut m = mem();
        let x = m.alloc("X", P1, 3).unwrap();
        let e = m
            .apply(
                P2,
                Op::Cas {
                    expected: 0,
                    new: 5,
                },
                x,
                None,
            )
            .unwrap();
        assert_eq!(e.outcome, Outcome::Failure);
        assert_eq!(e.value_read, Some(3));
        assert_eq!(e.value_written, None);
        assert_eq!(m.value(x), 3);

        let ok = m
            .apply(
                P2,
                Op::Cas {
                    expected: 3,
                    new: 5,
                },
                x,
                None,
            )
            .unwrap();
        assert_eq!(ok.outcome, Outcome::Success);
        assert_eq!(m.value(x), 5);
    }

    #[test]
    fn fetch_and_increment() {
        let mut m = mem();
        let t = m.alloc("Q_tail", P1, 4).unwrap();
        let e = m.apply(P1, Op::Fai, t, None).unwrap();
        assert_eq!(e.value_read, Some(4));
        assert_eq!(e.value_written, Some(5));
        assert_eq!(m.value(t), 5);
    }

    #[test]
    fn fetch_and_store_and_test_and_set() {
        let mut m = mem();
        let x = m.alloc("X", P1, 7).unwrap();
        let e = m.apply(P2, Op::Fas { value: 9 }, x, None).unwrap();
        assert_eq!((e.value_read, m.value(x)), (Some(7), 9));

        let l = m.alloc("L", P1, 0).unwrap();
        let won = m.apply(P1, Op::Tas, l, None).unwrap();
        assert_eq!(won.outcome, Outcome::Success);
        let lost = m.apply(P2, Op::Tas, l, None).unwrap();
        assert_eq!(lost.outcome, Outcome::Failure);
        assert_eq!(lost.value_written, None);
        assert_eq!(m.last_writer(l), Some(P1));
    }

    #[test]
    fn ll_sc_links() {
        let mut m = mem();
        let x = m.alloc("X", P1, 0).unwrap();

        // SC without LL fails quietly.
        let e = m.apply(P1, Op::Sc { value: 1 }, x, None).unwrap();
        assert_eq!(e.outcome, Outcome::Failure);

        m.apply(P1, Op::Ll, x, None).unwrap();
        let e = m.apply(P1, Op::Sc { value: 2 }, x, None).unwrap();
        assert_eq!(e.outcome, Outcome::Success);
        assert_eq!(m.value(x), 2);

        // A write by anyone breaks the link.
        m.apply(P1, Op::Ll, x, None).unwrap();
        m.apply(P2, Op::Ll, x, None).unwrap();
        m.apply(P2, Op::Write { value: 3 }, x, None).unwrap();
        let e = m.apply(P1, Op::Sc { value: 4 }, x, None).unwrap();
        assert_eq!(e.outcome, Outcome::Failure);
        assert_eq!(e.writer_before, Some(P2));
        assert_eq!(m.value(x), 3);

        // A failed CAS does not.
        m.apply(P1, Op::Ll, x, None).unwrap();
        m.apply(
            P2,
            Op::Cas {
                expected: 0,
                new: 1,
            },
            x,
            None,
        )
        .unwrap();
        let e = m.apply(P1, Op::Sc { value: 5 }, x, None).unwrap();
        assert_eq!(e.outcome, Outcome::Success);
    }

    #[test]
    fn last_writer_over_prefix() {
        let mut m = mem();
        let x = m.alloc("X", P1, 0).unwrap();
        let mut log = Vec::new();
        assert_eq!(last_writer(&log, x), None);

        log.push(m.apply(P1, Op::Write { value: 1 }, x, None).unwrap());
        log.push(m.apply(P2, Op::Write { value: 2 }, x, None).unwrap());
        assert_eq!(last_writer(&log, x), Some(P2));

        let mut m = mem();
        let x = m.alloc("X", P1, 0).unwrap();
        let mut log = vec![m.apply(P1, Op::Write { value: 1 }, x, None).unwrap()];
        let failed = m
            .apply(
                P2,
                Op::Cas {
                    expected: 0,
                    new: 9,
                },
                x,
                None,
            )
            .unwrap();
        assert!(failed.value_written.is_none());
        log.push(failed);
        assert_eq!(last_writer(&log, x), Some(P1));
        assert_eq!(m.last_writer(x), Some(P1));
    }

    #[test]
    fn read_writer_before_matches_prefix_last_writer() {
        let mut m = mem();
        let x = m.alloc("X", P1, 0).unwrap();
        let script = [
            (P1, Op::Write { value: 1 }),
            (P2, Op::Read),
            (
                P2,
                Op::Cas {
                    expected: 1,
                    new: 2,
                },
            ),
            (P1, Op::Read),
            (P1, Op::Tas),
            (ProcId(3), Op::Read),
        ];
        let mut log: Vec<Event> = Vec::new();
        for (p, op) in script {
            let e = m.apply(p, op, x, None).unwrap();
            assert_eq!(e.writer_before, last_writer(&log, x));
            log.push(e);
        }
    }
}
