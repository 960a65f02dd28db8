//! Execution engine: drives process programs step by step under a schedule.
//!
//! A [`Sim`] owns the memory, every process's program state, the recorded
//! [`History`] and (optionally) the running [`RmrLedger`]. All scheduling
//! decisions are logged as [`Directive`]s so any simulation can be replayed
//! bit-for-bit, which is how erasure is implemented.

use std::collections::BTreeSet;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::algorithm::{Action, AlgorithmInstance, LocalState, PreconditionError};
use crate::cost::{classify_dsm, CostModel, EventCost, RmrLedger};
use crate::memory::{CallId, Event, LocId, Memory, MemoryError, MemoryImage, Op, OpKind, ProcId};
use crate::script::{CallKind, Script, ScriptItem};

pub mod adversary;
mod explore;
mod tools;

pub use explore::{enumerate, explore, EnumerateOptions, EnumerationStats, ExploreReport, Witness};
pub use tools::{solo_extend, stability_oracle, validate_erasure, Stability};

/// Default cap on distinct solo configurations before the stability oracle
/// gives up.
pub const DEFAULT_STABILITY_BOUND: usize = 10_000;

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Precondition(#[from] PreconditionError),
    #[error(transparent)]
    Memory(#[from] MemoryError),
    #[error("{proc} faulted: {message}")]
    Fault { proc: ProcId, message: String },
    #[error("{proc} returned from {kind:?} without taking a step")]
    ZeroStepCall { proc: ProcId, kind: CallKind },
    #[error("{proc} returned a malformed response from {kind:?}")]
    BadResponse { proc: ProcId, kind: CallKind },
    #[error("{proc} issued {kind:?}, which the algorithm does not declare")]
    UndeclaredPrimitive { proc: ProcId, kind: OpKind },
    #[error("{0} has no further steps")]
    ProcessDone(ProcId),
    #[error("{0} is not a configured process")]
    UnknownProcess(ProcId),
    #[error("{0} is not active")]
    NotActive(ProcId),
    #[error("erasing {0} refused: another process sees it")]
    ErasureRefused(ProcId),
    #[error("replay diverged for {proc} at its step {index}")]
    ReplayDivergence { proc: ProcId, index: usize },
    #[error("stability undecided for {proc} after {configurations} configurations")]
    Undecided { proc: ProcId, configurations: usize },
    #[error("CC classification needs cost tracking enabled")]
    CostsDisabled,
    #[error("explored {explored} histories, over the limit")]
    Overflow { explored: u64 },
}

/// One procedure call as it appears in a history.
///
/// `start_seq` is the call's first event; a call that has not taken a step
/// has not begun and is not recorded.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CallRecord {
    pub id: CallId,
    pub proc: ProcId,
    pub kind: CallKind,
    pub response: Option<bool>,
    pub start_seq: u64,
    pub last_seq: u64,
    pub end_seq: Option<u64>,
    pub steps: u32,
}

impl CallRecord {
    pub fn returned(&self) -> bool {
        self.end_seq.is_some()
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct History {
    pub n: usize,
    pub events: Vec<Event>,
    pub calls: Vec<CallRecord>,
    /// Processes whose script has run out.
    pub terminated: BTreeSet<ProcId>,
}

impl History {
    pub fn new(n: usize) -> Self {
        History {
            n,
            ..Default::default()
        }
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// Processes with at least one event.
    pub fn participants(&self) -> BTreeSet<ProcId> {
        self.events.iter().map(|e| e.proc).collect()
    }

    pub fn finished(&self) -> BTreeSet<ProcId> {
        self.participants()
            .intersection(&self.terminated)
            .copied()
            .collect()
    }

    pub fn active(&self) -> BTreeSet<ProcId> {
        self.participants()
            .difference(&self.terminated)
            .copied()
            .collect()
    }

    pub fn events_of(&self, p: ProcId) -> impl Iterator<Item = &Event> + '_ {
        self.events.iter().filter(move |e| e.proc == p)
    }

    /// `p` reads some location last written by `q`.
    pub fn sees(&self, p: ProcId, q: ProcId) -> bool {
        self.events_of(p).any(|e| e.sees(q))
    }

    /// `p` accesses some location in `q`'s module.
    pub fn touches(&self, p: ProcId, q: ProcId) -> bool {
        self.events_of(p).any(|e| e.home == q)
    }

    /// Processes whose module received a write in this history.
    pub fn written_modules(&self) -> BTreeSet<ProcId> {
        self.events
            .iter()
            .filter(|e| e.modified_memory())
            .map(|e| e.home)
            .collect()
    }

    pub fn ledger(&self) -> RmrLedger {
        let mut ledger = RmrLedger::from_events(&self.events);
        for &p in &self.terminated {
            ledger.mark_finished(p, true);
        }
        ledger
    }
}

/// A scheduling decision, recorded for replay.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Directive {
    Step(ProcId),
    SetScript(ProcId, Script),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SchedulePolicy {
    RoundRobin,
    Random { seed: u64 },
    Explicit(Vec<ProcId>),
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
struct OpenCall {
    kind: CallKind,
    record: Option<usize>,
    /// Local state before the call was opened; restored if the call is
    /// cancelled before its first step.
    snapshot: LocalState,
    /// Whether returning from this call advances the script cursor.
    scripted: bool,
}

#[derive(Clone, Debug)]
struct ProcState {
    local: LocalState,
    script: Script,
    item: usize,
    polls_in_item: u32,
    saw_true: bool,
    call: Option<OpenCall>,
    pending: Option<(Op, LocId)>,
    calls_made: u32,
}

/// The parts of a process's state that determine its future behaviour.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub(crate) struct ProcKey {
    local: LocalState,
    item: usize,
    polls_in_item: u32,
    saw_true: bool,
    call: Option<(CallKind, bool, bool)>,
    pending: Option<(Op, LocId)>,
}

impl ProcState {
    fn new(script: Script) -> Self {
        ProcState {
            local: LocalState::default(),
            script,
            item: 0,
            polls_in_item: 0,
            saw_true: false,
            call: None,
            pending: None,
            calls_made: 0,
        }
    }

    fn next_call(&mut self) -> Option<CallKind> {
        while let Some(&item) = self.script.items().get(self.item) {
            match item {
                ScriptItem::Poll { max } => {
                    if self.saw_true || max.is_some_and(|m| self.polls_in_item >= m) {
                        self.item += 1;
                        self.polls_in_item = 0;
                        continue;
                    }
                    return Some(CallKind::Poll);
                }
                other => return Some(other.kind()),
            }
        }
        None
    }

    fn note_return(&mut self, kind: CallKind) {
        match kind {
            CallKind::Poll => self.polls_in_item += 1,
            _ => {
                self.item += 1;
                self.polls_in_item = 0;
            }
        }
    }

    fn key(&self) -> ProcKey {
        let unbounded = matches!(
            self.script.items().get(self.item),
            Some(ScriptItem::Poll { max: None })
        );
        ProcKey {
            local: self.local.clone(),
            item: self.item,
            polls_in_item: if unbounded { 0 } else { self.polls_in_item },
            saw_true: self.saw_true,
            call: self
                .call
                .as_ref()
                .map(|c| (c.kind, c.record.is_some(), c.scripted)),
            pending: self.pending,
        }
    }
}

/// What a single step produced.
#[derive(Clone, Debug)]
pub struct StepInfo {
    pub event: Event,
    pub cost: Option<EventCost>,
    /// The call this step belongs to, if the step finished it.
    pub returned: Option<CallRecord>,
}

#[derive(Clone, Debug)]
pub struct Sim {
    instance: Arc<AlgorithmInstance>,
    scripts: Vec<Script>,
    memory: Memory,
    procs: Vec<ProcState>,
    history: History,
    ledger: Option<RmrLedger>,
    directives: Vec<Directive>,
}

impl Sim {
    pub fn new(
        instance: Arc<AlgorithmInstance>,
        scripts: Vec<Script>,
        track_costs: bool,
    ) -> Result<Self, SimError> {
        instance.check_roles(&scripts)?;
        let n = instance.process_count();
        let mut sim = Sim {
            memory: instance.initial_memory().clone(),
            procs: scripts.iter().cloned().map(ProcState::new).collect(),
            history: History::new(n),
            ledger: track_costs.then(RmrLedger::new),
            directives: Vec::new(),
            scripts,
            instance,
        };
        for i in 0..n {
            sim.advance(i, None)?;
        }
        Ok(sim)
    }

    /// Rebuilds a simulation from its initial scripts and a directive log.
    pub fn replay(
        instance: Arc<AlgorithmInstance>,
        scripts: Vec<Script>,
        directives: &[Directive],
        track_costs: bool,
    ) -> Result<Self, SimError> {
        let mut sim = Sim::new(instance, scripts, track_costs)?;
        for d in directives {
            match d {
                Directive::Step(p) => {
                    sim.step(*p)?;
                }
                Directive::SetScript(p, s) => sim.set_script(*p, s.clone())?,
            }
        }
        Ok(sim)
    }

    pub fn instance(&self) -> &Arc<AlgorithmInstance> {
        &self.instance
    }

    pub fn scripts(&self) -> &[Script] {
        &self.scripts
    }

    pub fn process_count(&self) -> usize {
        self.procs.len()
    }

    pub fn processes(&self) -> impl Iterator<Item = ProcId> {
        (0..self.procs.len()).map(ProcId::from_index)
    }

    pub fn history(&self) -> &History {
        &self.history
    }

    pub fn into_history(self) -> History {
        self.history
    }

    pub fn memory(&self) -> &Memory {
        &self.memory
    }

    pub fn ledger(&self) -> Option<&RmrLedger> {
        self.ledger.as_ref()
    }

    pub fn tracks_costs(&self) -> bool {
        self.ledger.is_some()
    }

    pub fn directives(&self) -> &[Directive] {
        &self.directives
    }

    /// Processes that ran out of script.
    pub fn is_done(&self, p: ProcId) -> bool {
        self.procs
            .get(p.index())
            .is_none_or(|ps| ps.pending.is_none())
    }

    pub fn all_done(&self) -> bool {
        self.procs.iter().all(|ps| ps.pending.is_none())
    }

    pub fn runnable(&self) -> Vec<ProcId> {
        self.processes().filter(|&p| !self.is_done(p)).collect()
    }

    /// The access `p` will perform next.
    pub fn pending(&self, p: ProcId) -> Option<(Op, LocId)> {
        self.procs.get(p.index()).and_then(|ps| ps.pending)
    }

    /// The call `p` is currently inside, if it has taken a step in it.
    pub fn open_call(&self, p: ProcId) -> Option<&CallRecord> {
        let call = self.procs.get(p.index())?.call.as_ref()?;
        call.record.map(|r| &self.history.calls[r])
    }

    /// True when `p` has no call in progress (it may be poised on the first
    /// step of its next one).
    pub fn between_calls(&self, p: ProcId) -> bool {
        self.open_call(p).is_none()
    }

    pub fn saw_true(&self, p: ProcId) -> bool {
        self.procs[p.index()].saw_true
    }

    pub(crate) fn proc_key(&self, p: ProcId) -> ProcKey {
        self.procs[p.index()].key()
    }

    pub(crate) fn image(&self) -> MemoryImage {
        self.memory.image()
    }

    fn check_proc(&self, p: ProcId) -> Result<usize, SimError> {
        if p.0 == 0 || p.index() >= self.procs.len() {
            Err(SimError::UnknownProcess(p))
        } else {
            Ok(p.index())
        }
    }

    /// Executes `p`'s pending access and runs its program up to the next one.
    pub fn step(&mut self, p: ProcId) -> Result<StepInfo, SimError> {
        let idx = self.check_proc(p)?;
        let ps = &mut self.procs[idx];
        let (op, loc) = ps.pending.ok_or(SimError::ProcessDone(p))?;
        let call = ps.call.as_mut().expect("pending access outside a call");
        let seq = self.memory.next_seq();
        let record = match call.record {
            Some(r) => r,
            None => {
                let r = self.history.calls.len();
                self.history.calls.push(CallRecord {
                    id: CallId {
                        proc: p,
                        index: ps.calls_made,
                    },
                    proc: p,
                    kind: call.kind,
                    response: None,
                    start_seq: seq,
                    last_seq: seq,
                    end_seq: None,
                    steps: 0,
                });
                ps.calls_made += 1;
                call.record = Some(r);
                r
            }
        };
        let call_id = self.history.calls[record].id;
        let event = self.memory.apply(p, op, loc, Some(call_id))?;
        {
            let rec = &mut self.history.calls[record];
            rec.last_seq = event.seq;
            rec.steps += 1;
        }
        let cost = self.ledger.as_mut().map(|l| l.update(&event));
        self.history.events.push(event.clone());
        self.directives.push(Directive::Step(p));
        self.advance(idx, Some(&event))?;
        let returned = self.history.calls[record]
            .returned()
            .then(|| self.history.calls[record].clone());
        Ok(StepInfo {
            event,
            cost,
            returned,
        })
    }

    /// Replaces `p`'s script. A call that has not begun is cancelled; one in
    /// progress runs to completion and the new script takes over afterwards.
    pub fn set_script(&mut self, p: ProcId, script: Script) -> Result<(), SimError> {
        let idx = self.check_proc(p)?;
        let ps = &mut self.procs[idx];
        let mut idle = true;
        if let Some(call) = ps.call.as_mut() {
            if call.record.is_some() {
                call.scripted = false;
                idle = false;
            } else {
                ps.local = call.snapshot.clone();
                ps.call = None;
                ps.pending = None;
            }
        }
        ps.script = script.clone();
        ps.item = 0;
        ps.polls_in_item = 0;
        self.directives.push(Directive::SetScript(p, script));
        if idle {
            self.advance(idx, None)?;
        }
        Ok(())
    }

    fn set_terminated(&mut self, p: ProcId, done: bool) {
        if done {
            self.history.terminated.insert(p);
        } else {
            self.history.terminated.remove(&p);
        }
        if let Some(l) = self.ledger.as_mut() {
            l.mark_finished(p, done);
        }
    }

    /// Runs `p`'s program until it wants memory or runs out of script.
    fn advance(&mut self, idx: usize, last: Option<&Event>) -> Result<(), SimError> {
        let p = ProcId::from_index(idx);
        let algorithm = Arc::clone(self.instance.algorithm());
        let primitives = algorithm.primitives();
        let mut last = last;
        loop {
            let ps = &mut self.procs[idx];
            let Some(call) = ps.call.as_ref() else {
                match ps.next_call() {
                    Some(kind) => {
                        let snapshot = ps.local.clone();
                        ps.local.reset_call();
                        ps.call = Some(OpenCall {
                            kind,
                            record: None,
                            snapshot,
                            scripted: true,
                        });
                        continue;
                    }
                    None => {
                        ps.pending = None;
                        self.set_terminated(p, true);
                        return Ok(());
                    }
                }
            };
            let kind = call.kind;
            match algorithm.step(p, kind, &mut ps.local, last.take()) {
                Action::Access(op, loc) => {
                    if !primitives.contains(op.kind()) {
                        return Err(SimError::UndeclaredPrimitive {
                            proc: p,
                            kind: op.kind(),
                        });
                    }
                    ps.pending = Some((op, loc));
                    self.set_terminated(p, false);
                    return Ok(());
                }
                Action::Return(response) => {
                    let call = ps.call.take().expect("checked above");
                    let Some(r) = call.record else {
                        return Err(SimError::ZeroStepCall { proc: p, kind });
                    };
                    if (kind == CallKind::Poll) != response.is_some() {
                        return Err(SimError::BadResponse { proc: p, kind });
                    }
                    if call.scripted {
                        ps.note_return(kind);
                    }
                    if response == Some(true) {
                        ps.saw_true = true;
                    }
                    let rec = &mut self.history.calls[r];
                    rec.response = response;
                    rec.end_seq = Some(rec.last_seq);
                }
                Action::Fault(message) => return Err(SimError::Fault { proc: p, message }),
            }
        }
    }

    /// Steps according to `policy` until every script is done or `budget`
    /// steps have been taken.
    pub fn run_policy(&mut self, policy: &SchedulePolicy, budget: u64) -> Result<(), SimError> {
        let mut taken = 0u64;
        match policy {
            SchedulePolicy::RoundRobin => {
                let n = self.procs.len();
                let mut next = 0usize;
                while taken < budget && !self.all_done() {
                    let idx = (0..n)
                        .map(|k| (next + k) % n)
                        .find(|&i| self.procs[i].pending.is_some())
                        .expect("some process is runnable");
                    self.step(ProcId::from_index(idx))?;
                    next = (idx + 1) % n;
                    taken += 1;
                }
            }
            SchedulePolicy::Random { seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                while taken < budget {
                    let runnable = self.runnable();
                    let Some(&p) = runnable.choose(&mut rng) else {
                        break;
                    };
                    self.step(p)?;
                    taken += 1;
                }
            }
            SchedulePolicy::Explicit(order) => {
                for &p in order {
                    if taken >= budget {
                        break;
                    }
                    self.check_proc(p)?;
                    self.step(p)?;
                    taken += 1;
                }
            }
        }
        Ok(())
    }

    /// Runs `p` alone until its current call returns. Returns the response.
    pub fn finish_call(&mut self, p: ProcId, budget: u64) -> Result<Option<CallRecord>, SimError> {
        if self.open_call(p).is_none() {
            return Ok(None);
        }
        for _ in 0..budget {
            if let Some(rec) = self.step(p)?.returned {
                return Ok(Some(rec));
            }
        }
        Ok(None)
    }

    /// Runs `p` alone for one complete call of its script.
    pub fn run_call(&mut self, p: ProcId, budget: u64) -> Result<Option<CallRecord>, SimError> {
        for _ in 0..budget {
            if self.is_done(p) {
                return Ok(None);
            }
            if let Some(rec) = self.step(p)?.returned {
                return Ok(Some(rec));
            }
        }
        Ok(None)
    }

    /// The same simulation with every step and script change of `p` removed,
    /// rebuilt by replay. Refused unless [`validate_erasure`] holds; the
    /// surviving processes' events are checked to be unchanged.
    pub fn erase(&self, p: ProcId) -> Result<Sim, SimError> {
        if !validate_erasure(&self.history, p) {
            return Err(SimError::ErasureRefused(p));
        }
        let directives: Vec<Directive> = self
            .directives
            .iter()
            .filter(|d| match d {
                Directive::Step(q) | Directive::SetScript(q, _) => *q != p,
            })
            .cloned()
            .collect();
        let replayed = Sim::replay(
            Arc::clone(&self.instance),
            self.scripts.clone(),
            &directives,
            self.tracks_costs(),
        )?;
        for q in self.processes().filter(|&q| q != p) {
            let before: Vec<&Event> = self.history.events_of(q).collect();
            let after: Vec<&Event> = replayed.history.events_of(q).collect();
            if before.len() != after.len() {
                return Err(SimError::ReplayDivergence {
                    proc: q,
                    index: before.len().min(after.len()),
                });
            }
            for (index, (a, b)) in before.iter().zip(&after).enumerate() {
                if !same_step_without(a, b, p) {
                    return Err(SimError::ReplayDivergence { proc: q, index });
                }
            }
        }
        Ok(replayed)
    }

    /// DSM or CC classification of an event this simulation produced.
    pub fn is_rmr(&self, info: &StepInfo, model: CostModel) -> Result<bool, SimError> {
        match model {
            CostModel::Dsm => Ok(classify_dsm(&info.event).is_rmr()),
            CostModel::Cc => info
                .cost
                .map(|c| c.cc.is_rmr())
                .ok_or(SimError::CostsDisabled),
        }
    }

    /// Key of the whole configuration: memory plus every process's state.
    pub(crate) fn config_key(&self) -> (MemoryImage, Vec<ProcKey>) {
        (
            self.memory.image(),
            self.procs.iter().map(ProcState::key).collect(),
        )
    }
}

/// Equal up to sequence number, and up to `writer_before` where the original
/// step overwrote a value of the erased process.
fn same_step_without(a: &Event, b: &Event, erased: ProcId) -> bool {
    a.proc == b.proc
        && a.op == b.op
        && a.loc == b.loc
        && a.home == b.home
        && a.value_read == b.value_read
        && a.value_written == b.value_written
        && a.outcome == b.outcome
        && a.call == b.call
        && (a.writer_before == b.writer_before || a.writer_before == Some(erased))
}

/// Builds a simulation and runs it under `policy`.
pub fn run(
    instance: Arc<AlgorithmInstance>,
    scripts: Vec<Script>,
    policy: &SchedulePolicy,
    budget: u64,
) -> Result<Sim, SimError> {
    let mut sim = Sim::new(instance, scripts, true)?;
    sim.run_policy(policy, budget)?;
    Ok(sim)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algorithm::{build, BuildParams};

    fn inst(name: &str, n: usize) -> Arc<AlgorithmInstance> {
        Arc::new(build(name, &BuildParams::new(n)).unwrap())
    }

    #[test]
    fn round_robin_smoke() {
        let sim = run(
            inst("cc_flag", 2),
            vec![Script::signal(), Script::poll_until_true()],
            &SchedulePolicy::RoundRobin,
            100,
        )
        .unwrap();
        assert!(sim.all_done());
        let h = sim.history();
        assert_eq!(h.calls.len(), 2);
        assert!(h.calls.iter().all(CallRecord::returned));
        assert_eq!(h.finished().len(), 2);
        assert!(h.active().is_empty());
    }

    #[test]
    fn random_runs_are_reproducible() {
        let scripts = vec![
            Script::signal(),
            Script::poll_until_true(),
            Script::poll_until_true(),
            Script::poll_until_true(),
        ];
        let a = run(
            inst("dsm_queue", 4),
            scripts.clone(),
            &SchedulePolicy::Random { seed: 7 },
            1000,
        )
        .unwrap();
        let b = run(
            inst("dsm_queue", 4),
            scripts,
            &SchedulePolicy::Random { seed: 7 },
            1000,
        )
        .unwrap();
        assert_eq!(a.history(), b.history());
        assert_eq!(a.memory().image(), b.memory().image());
    }

    #[test]
    fn budget_leaves_busy_wait_incomplete() {
        let sim = run(
            inst("dsm_fixed_waiters_term", 3),
            vec![Script::signal(), Script::idle(), Script::idle()],
            &SchedulePolicy::RoundRobin,
            10_000,
        )
        .unwrap();
        assert!(!sim.all_done());
        assert_eq!(sim.history().len(), 10_000);
        let signal = &sim.history().calls[0];
        assert_eq!(signal.kind, CallKind::Signal);
        assert!(!signal.returned());
    }

    #[test]
    fn explicit_schedule_rejects_unknown_and_done() {
        let mut sim = Sim::new(
            inst("cc_flag", 2),
            vec![Script::signal(), Script::polls(1)],
            true,
        )
        .unwrap();
        assert!(matches!(
            sim.run_policy(&SchedulePolicy::Explicit(vec![ProcId(3)]), 10),
            Err(SimError::UnknownProcess(_))
        ));
        sim.run_policy(&SchedulePolicy::Explicit(vec![ProcId(1)]), 10)
            .unwrap();
        assert!(matches!(sim.step(ProcId(1)), Err(SimError::ProcessDone(_))));
    }

    #[test]
    fn replay_reproduces_history() {
        let sim = run(
            inst("dsm_registration", 4),
            vec![
                Script::signal(),
                Script::poll_until_true(),
                Script::poll_until_true(),
                Script::polls(2),
            ],
            &SchedulePolicy::Random { seed: 3 },
            500,
        )
        .unwrap();
        let again = Sim::replay(
            Arc::clone(sim.instance()),
            sim.scripts().to_vec(),
            sim.directives(),
            true,
        )
        .unwrap();
        assert_eq!(sim.history(), again.history());
    }

    #[test]
    fn set_script_cancels_unstarted_call() {
        let mut sim = Sim::new(
            inst("dsm_queue", 3),
            vec![Script::idle(), Script::poll_until_true(), Script::idle()],
            true,
        )
        .unwrap();
        // Poll#1 of p2: FAI, write, read G.
        sim.run_call(ProcId(2), 10).unwrap();
        assert!(sim.between_calls(ProcId(2)));
        sim.set_script(ProcId(2), Script::signal()).unwrap();
        assert_eq!(
            sim.pending(ProcId(2)).map(|(op, _)| op),
            Some(Op::Write { value: 1 })
        );
        let rec = sim.run_call(ProcId(2), 100).unwrap().unwrap();
        assert_eq!(rec.kind, CallKind::Signal);
        assert!(sim.is_done(ProcId(2)));
    }

    #[test]
    fn undeclared_primitive_is_caught() {
        use crate::algorithm::{Algorithm, PrimitiveSet};

        #[derive(Debug)]
        struct Sneaky(LocId);
        impl Algorithm for Sneaky {
            fn name(&self) -> String {
                "sneaky".into()
            }
            fn primitives(&self) -> PrimitiveSet {
                PrimitiveSet::read_write()
            }
            fn supports(&self, _: CallKind) -> bool {
                true
            }
            fn step(
                &self,
                _: ProcId,
                _: CallKind,
                local: &mut LocalState,
                _: Option<&Event>,
            ) -> Action {
                if local.pc == 0 {
                    local.pc = 1;
                    Action::Access(Op::Fai, self.0)
                } else {
                    Action::Return(None)
                }
            }
        }
        let mut memory = Memory::new(1);
        let x = memory.alloc("X", ProcId(1), 0).unwrap();
        let instance = Arc::new(AlgorithmInstance::new(Arc::new(Sneaky(x)), memory));
        assert!(matches!(
            Sim::new(instance, vec![Script::signal()], false),
            Err(SimError::UndeclaredPrimitive { .. })
        ));
    }
}
