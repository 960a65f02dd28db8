//! Remote-memory-reference accounting.
//!
//! Two classifications are computed for every event:
//!
//! * **DSM**: an access is remote iff the location's home module belongs to
//!   another process.
//! * **CC**: an idealized write-through cache that never drops data on its
//!   own. A read hits when the reader still holds a valid copy; every
//!   nontrivial attempt goes to memory, refreshes the writer's copy and
//!   invalidates everybody else's.
//!
//! Invalidation traffic is counted for a broadcast bus (one message per
//! nontrivial attempt) and for an ideal directory that only messages caches
//! actually holding a copy.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::memory::{CallId, Event, LocId, ProcId};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CostModel {
    Dsm,
    Cc,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Access {
    Local,
    Rmr,
}

impl Access {
    pub fn is_rmr(self) -> bool {
        self == Access::Rmr
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum MessageMode {
    Bus,
    IdealDirectory,
}

/// Which processes hold a valid cached copy of which locations.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct CacheState {
    holders: BTreeMap<LocId, BTreeSet<ProcId>>,
}

impl CacheState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn holds(&self, proc: ProcId, loc: LocId) -> bool {
        self.holders.get(&loc).is_some_and(|s| s.contains(&proc))
    }

    /// Processes other than `proc` holding a copy of `loc`.
    pub fn remote_holders(&self, proc: ProcId, loc: LocId) -> usize {
        self.holders
            .get(&loc)
            .map_or(0, |s| s.iter().filter(|&&q| q != proc).count())
    }

    pub fn len(&self) -> usize {
        self.holders.values().map(BTreeSet::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn insert(&mut self, proc: ProcId, loc: LocId) {
        self.holders.entry(loc).or_default().insert(proc);
    }

    fn invalidate_others(&mut self, proc: ProcId, loc: LocId) {
        if let Some(s) = self.holders.get_mut(&loc) {
            s.retain(|&q| q == proc);
        }
    }
}

pub fn classify_dsm(e: &Event) -> Access {
    if e.home == e.proc {
        Access::Local
    } else {
        Access::Rmr
    }
}

/// Classifies `e` under the CC model and applies its effect to `cache`.
pub fn classify_cc(e: &Event, cache: &mut CacheState) -> Access {
    if e.op.is_trivial() {
        if cache.holds(e.proc, e.loc) {
            Access::Local
        } else {
            cache.insert(e.proc, e.loc);
            Access::Rmr
        }
    } else {
        // Failed CAS/SC/TAS are charged like successful ones.
        cache.invalidate_others(e.proc, e.loc);
        cache.insert(e.proc, e.loc);
        Access::Rmr
    }
}

/// Invalidation messages caused by `e`, given the cache before `e`.
pub fn count_messages(e: &Event, cache_before: &CacheState, mode: MessageMode) -> u64 {
    if e.op.is_trivial() {
        return 0;
    }
    match mode {
        MessageMode::Bus => 1,
        MessageMode::IdealDirectory => cache_before.remote_holders(e.proc, e.loc) as u64,
    }
}

/// The five reported metrics.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Metrics {
    pub rmr_dsm: u64,
    pub rmr_cc: u64,
    pub msg_bus: u64,
    pub msg_dir: u64,
    pub steps: u64,
}

impl Metrics {
    pub fn rmr(&self, model: CostModel) -> u64 {
        match model {
            CostModel::Dsm => self.rmr_dsm,
            CostModel::Cc => self.rmr_cc,
        }
    }

    fn add(&mut self, c: &EventCost) {
        self.rmr_dsm += u64::from(c.dsm.is_rmr());
        self.rmr_cc += u64::from(c.cc.is_rmr());
        self.msg_bus += c.msg_bus;
        self.msg_dir += c.msg_dir;
        self.steps += 1;
    }

    pub fn merge(&mut self, other: &Metrics) {
        self.rmr_dsm += other.rmr_dsm;
        self.rmr_cc += other.rmr_cc;
        self.msg_bus += other.msg_bus;
        self.msg_dir += other.msg_dir;
        self.steps += other.steps;
    }
}

/// Classification of a single event.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventCost {
    pub dsm: Access,
    pub cc: Access,
    pub msg_bus: u64,
    pub msg_dir: u64,
}

/// Per-process tallies, with the two extra counters the message invariants
/// are stated over.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProcessCounts {
    #[serde(flatten)]
    pub metrics: Metrics,
    pub cc_read_rmrs: u64,
    pub nontrivial: u64,
}

/// Running fold of [`EventCost`]s over a history.
#[derive(Clone, Debug, Default)]
pub struct RmrLedger {
    cache: CacheState,
    per_process: BTreeMap<ProcId, ProcessCounts>,
    per_call: BTreeMap<CallId, Metrics>,
    finished: BTreeSet<ProcId>,
}

impl RmrLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_events<'a>(events: impl IntoIterator<Item = &'a Event>) -> Self {
        let mut ledger = Self::new();
        for e in events {
            ledger.update(e);
        }
        ledger
    }

    pub fn update(&mut self, e: &Event) -> EventCost {
        let msg_bus = count_messages(e, &self.cache, MessageMode::Bus);
        let msg_dir = count_messages(e, &self.cache, MessageMode::IdealDirectory);
        let cost = EventCost {
            dsm: classify_dsm(e),
            cc: classify_cc(e, &mut self.cache),
            msg_bus,
            msg_dir,
        };
        let counts = self.per_process.entry(e.proc).or_default();
        counts.metrics.add(&cost);
        if e.op.is_trivial() && cost.cc.is_rmr() {
            counts.cc_read_rmrs += 1;
        }
        if !e.op.is_trivial() {
            counts.nontrivial += 1;
        }
        if let Some(call) = e.call {
            self.per_call.entry(call).or_default().add(&cost);
        }
        cost
    }

    pub fn mark_finished(&mut self, proc: ProcId, finished: bool) {
        if finished {
            self.finished.insert(proc);
        } else {
            self.finished.remove(&proc);
        }
    }

    pub fn cache(&self) -> &CacheState {
        &self.cache
    }

    pub fn participants(&self) -> impl Iterator<Item = ProcId> + '_ {
        self.per_process.keys().copied()
    }

    /// Participants that have terminated.
    pub fn finished(&self) -> BTreeSet<ProcId> {
        self.finished
            .iter()
            .filter(|p| self.per_process.contains_key(p))
            .copied()
            .collect()
    }

    pub fn process(&self, proc: ProcId) -> ProcessCounts {
        self.per_process.get(&proc).copied().unwrap_or_default()
    }

    pub fn per_process(&self) -> &BTreeMap<ProcId, ProcessCounts> {
        &self.per_process
    }

    pub fn call(&self, call: CallId) -> Metrics {
        self.per_call.get(&call).copied().unwrap_or_default()
    }

    pub fn totals(&self) -> Metrics {
        let mut total = Metrics::default();
        for c in self.per_process.values() {
            total.merge(&c.metrics);
        }
        total
    }

    pub fn total_cc_read_rmrs(&self) -> u64 {
        self.per_process.values().map(|c| c.cc_read_rmrs).sum()
    }

    pub fn total_nontrivial(&self) -> u64 {
        self.per_process.values().map(|c| c.nontrivial).sum()
    }
}
