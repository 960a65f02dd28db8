//! Signaling algorithms as passive per-process state machines.
//!
//! An [`Algorithm`] never touches memory itself. The harness asks it for the
//! next [`Action`] of a process, performs the access, and feeds the resulting
//! event back on the following call to [`Algorithm::step`].

use std::collections::BTreeSet;
use std::fmt;
use std::sync::Arc;

use serde::{Serialize, Serializer};
use thiserror::Error;

use crate::memory::{Event, LocId, Memory, MemoryError, Op, OpKind, ProcId, Word, TRUE};
use crate::script::{CallKind, Script};

mod blocking;
mod cc_flag;
mod fixed_waiters;
mod queue;
mod registration;
mod single_waiter;

pub use blocking::Blocking;
pub use cc_flag::CcFlag;
pub use fixed_waiters::FixedWaiters;
pub use queue::QueueSignal;
pub use registration::Registration;
pub use single_waiter::SingleWaiter;

/// Registry names, without the optional `+blocking` suffix.
pub const ALGORITHMS: [&str; 6] = [
    "cc_flag",
    "dsm_single_waiter",
    "dsm_fixed_waiters",
    "dsm_fixed_waiters_term",
    "dsm_registration",
    "dsm_queue",
];

pub const BLOCKING_SUFFIX: &str = "+blocking";

/// Deliberately broken variants, buildable by name but not part of
/// [`ALGORITHMS`].
pub const MUTANTS: [&str; 1] = ["dsm_single_waiter_mutant"];

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Action {
    Access(Op, LocId),
    /// Finish the current call. Poll carries its Boolean response.
    Return(Option<bool>),
    Fault(String),
}

/// Program-local state of one process.
///
/// `pc`, `cursor` and `temp` belong to the call in progress and are cleared
/// whenever a new call starts; `joined` persists across calls.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct LocalState {
    pub pc: u8,
    pub cursor: usize,
    pub temp: Word,
    pub joined: bool,
}

impl LocalState {
    pub fn reset_call(&mut self) {
        self.pc = 0;
        self.cursor = 0;
        self.temp = 0;
    }
}

/// Value returned by the step just taken, 0 when there is none.
pub(crate) fn value_of(last: Option<&Event>) -> Word {
    last.and_then(|e| e.value_read).unwrap_or(0)
}

pub(crate) fn is_true(last: Option<&Event>) -> bool {
    value_of(last) == TRUE
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PrimitiveSet(BTreeSet<OpKind>);

impl PrimitiveSet {
    pub fn read_write() -> Self {
        PrimitiveSet([OpKind::Read, OpKind::Write].into_iter().collect())
    }

    pub fn with(mut self, kind: OpKind) -> Self {
        self.0.insert(kind);
        self
    }

    pub fn contains(&self, kind: OpKind) -> bool {
        self.0.contains(&kind)
    }

    pub fn is_read_write(&self) -> bool {
        self.0
            .iter()
            .all(|k| matches!(k, OpKind::Read | OpKind::Write))
    }
}

impl fmt::Display for PrimitiveSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<_> = self
            .0
            .iter()
            .map(|k| format!("{k:?}").to_uppercase())
            .collect();
        f.write_str(&names.join("+"))
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PreconditionError {
    #[error("{second} polls but {first} is already the single waiter")]
    SecondWaiter { first: ProcId, second: ProcId },
    #[error("{0} is not one of the fixed waiters")]
    NotAWaiter(ProcId),
    #[error("{proc} signals but the designated signaler is {signaler}")]
    NotDesignatedSignaler { proc: ProcId, signaler: ProcId },
    #[error("{algorithm} does not provide {kind:?}")]
    UnsupportedCall { algorithm: String, kind: CallKind },
    #[error("{count} scripts given for {n} processes")]
    RoleCount { count: usize, n: usize },
}

#[derive(Debug, Error)]
pub enum AlgorithmError {
    #[error("unknown algorithm {0:?}")]
    Unknown(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Memory(#[from] MemoryError),
}

pub trait Algorithm: fmt::Debug + Send + Sync {
    fn name(&self) -> String;

    fn primitives(&self) -> PrimitiveSet;

    fn supports(&self, kind: CallKind) -> bool;

    /// Next action of `proc` in its current `kind` call. `last` is the event
    /// of the step just taken, `None` at the start of a call.
    fn step(
        &self,
        proc: ProcId,
        kind: CallKind,
        local: &mut LocalState,
        last: Option<&Event>,
    ) -> Action;

    /// Algorithm-specific restrictions on who may call what. `scripts` is
    /// indexed by process.
    fn check_roles(&self, _scripts: &[Script]) -> Result<(), PreconditionError> {
        Ok(())
    }

    /// The only process allowed to signal, if the algorithm fixes one.
    fn fixed_signaler(&self) -> Option<ProcId> {
        None
    }
}

/// An algorithm bound to its allocated initial memory.
#[derive(Clone, Debug)]
pub struct AlgorithmInstance {
    algorithm: Arc<dyn Algorithm>,
    memory: Memory,
}

impl AlgorithmInstance {
    pub fn new(algorithm: Arc<dyn Algorithm>, memory: Memory) -> Self {
        AlgorithmInstance { algorithm, memory }
    }

    pub fn name(&self) -> String {
        self.algorithm.name()
    }

    pub fn algorithm(&self) -> &Arc<dyn Algorithm> {
        &self.algorithm
    }

    pub fn initial_memory(&self) -> &Memory {
        &self.memory
    }

    pub fn process_count(&self) -> usize {
        self.memory.process_count()
    }

    pub fn primitives(&self) -> PrimitiveSet {
        self.algorithm.primitives()
    }

    /// Wraps the instance so Wait runs Poll until it returns true.
    pub fn blocking(self) -> Self {
        AlgorithmInstance {
            algorithm: Arc::new(Blocking::new(self.algorithm)),
            memory: self.memory,
        }
    }

    /// Checks call support and the algorithm's role restrictions.
    pub fn check_roles(&self, scripts: &[Script]) -> Result<(), PreconditionError> {
        let n = self.process_count();
        if scripts.len() != n {
            return Err(PreconditionError::RoleCount {
                count: scripts.len(),
                n,
            });
        }
        for script in scripts {
            for item in script.items() {
                if !self.algorithm.supports(item.kind()) {
                    return Err(PreconditionError::UnsupportedCall {
                        algorithm: self.name(),
                        kind: item.kind(),
                    });
                }
            }
        }
        self.algorithm.check_roles(scripts)
    }
}

impl Serialize for PrimitiveSet {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

/// Placement and participant parameters shared by the registry constructors.
#[derive(Clone, Debug)]
pub struct BuildParams {
    pub n: usize,
    /// Module holding global variables (B, W, S, G, T, Q).
    pub global_home: ProcId,
    /// Waiter set for the fixed-waiters variants; defaults to everyone but
    /// the signaler.
    pub waiters: Option<Vec<ProcId>>,
    /// Designated signaler for the registration variant, and the module that
    /// holds participation flags for the terminating fixed-waiters variant.
    pub signaler: Option<ProcId>,
}

impl BuildParams {
    pub fn new(n: usize) -> Self {
        BuildParams {
            n,
            global_home: ProcId(1),
            waiters: None,
            signaler: None,
        }
    }

    pub fn with_waiters(mut self, waiters: Vec<ProcId>) -> Self {
        self.waiters = Some(waiters);
        self
    }

    pub fn with_signaler(mut self, signaler: ProcId) -> Self {
        self.signaler = Some(signaler);
        self
    }

    pub fn with_global_home(mut self, home: ProcId) -> Self {
        self.global_home = home;
        self
    }

    pub fn signaler_or_default(&self) -> ProcId {
        self.signaler.unwrap_or(self.global_home)
    }

    pub fn waiters_or_default(&self) -> Vec<ProcId> {
        match &self.waiters {
            Some(w) => w.clone(),
            None => {
                let s = self.signaler_or_default();
                (1..=self.n as u32)
                    .map(ProcId)
                    .filter(|&p| p != s)
                    .collect()
            }
        }
    }

    fn check_proc(&self, p: ProcId, what: &str) -> Result<(), AlgorithmError> {
        if p.0 == 0 || p.index() >= self.n {
            Err(AlgorithmError::Config(format!(
                "{what} {p} is outside 1..={}",
                self.n
            )))
        } else {
            Ok(())
        }
    }
}

/// Builds a registry algorithm by name; a `+blocking` suffix wraps it.
pub fn build(name: &str, params: &BuildParams) -> Result<AlgorithmInstance, AlgorithmError> {
    if let Some(inner) = name.strip_suffix(BLOCKING_SUFFIX) {
        return Ok(build(inner, params)?.blocking());
    }
    if params.n == 0 {
        return Err(AlgorithmError::Config("need at least one process".into()));
    }
    params.check_proc(params.global_home, "global home")?;
    if let Some(s) = params.signaler {
        params.check_proc(s, "signaler")?;
    }
    if let Some(ws) = &params.waiters {
        for &w in ws {
            params.check_proc(w, "waiter")?;
        }
    }
    match name {
        "cc_flag" => CcFlag::instance(params.n, params.global_home),
        "dsm_single_waiter" => SingleWaiter::instance(params.n, params.global_home),
        "dsm_single_waiter_mutant" => SingleWaiter::mutant(params.n, params.global_home),
        "dsm_fixed_waiters" => FixedWaiters::instance(params, false),
        "dsm_fixed_waiters_term" => FixedWaiters::instance(params, true),
        "dsm_registration" => Registration::instance(params.n, params.signaler_or_default()),
        "dsm_queue" => QueueSignal::instance(params.n, params.global_home),
        other => Err(AlgorithmError::Unknown(other.to_string())),
    }
}

/// Allocates `V[1..=n]` with `V[i]` in process i's module.
pub(crate) fn alloc_local_flags(
    memory: &mut Memory,
    prefix: &str,
) -> Result<Vec<LocId>, MemoryError> {
    (1..=memory.process_count() as u32)
        .map(|i| memory.alloc(&format!("{prefix}[{i}]"), ProcId(i), 0))
        .collect()
}

/// Allocates `name[1..=n]`, all homed at `home`.
pub(crate) fn alloc_array_at(
    memory: &mut Memory,
    prefix: &str,
    home: ProcId,
) -> Result<Vec<LocId>, MemoryError> {
    (1..=memory.process_count() as u32)
        .map(|i| memory.alloc(&format!("{prefix}[{i}]"), home, 0))
        .collect()
}
