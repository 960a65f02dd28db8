use std::sync::Arc;

use super::{Action, Algorithm, LocalState, PreconditionError, PrimitiveSet, BLOCKING_SUFFIX};
use crate::memory::{Event, ProcId};
use crate::script::{CallKind, Script};

/// Implements Wait by running the inner algorithm's Poll until it returns true.
#[derive(Debug)]
pub struct Blocking {
    inner: Arc<dyn Algorithm>,
}

impl Blocking {
    pub fn new(inner: Arc<dyn Algorithm>) -> Self {
        Blocking { inner }
    }
}

impl Algorithm for Blocking {
    fn name(&self) -> String {
        format!("{}{BLOCKING_SUFFIX}", self.inner.name())
    }

    fn primitives(&self) -> PrimitiveSet {
        self.inner.primitives()
    }

    fn supports(&self, kind: CallKind) -> bool {
        match kind {
            CallKind::Wait => self.inner.supports(CallKind::Poll),
            other => self.inner.supports(other),
        }
    }

    fn check_roles(&self, scripts: &[Script]) -> Result<(), PreconditionError> {
        let polls: Vec<Script> = scripts.iter().map(Script::waits_as_polls).collect();
        self.inner.check_roles(&polls)
    }

    fn fixed_signaler(&self) -> Option<ProcId> {
        self.inner.fixed_signaler()
    }

    fn step(
        &self,
        proc: ProcId,
        kind: CallKind,
        local: &mut LocalState,
        last: Option<&Event>,
    ) -> Action {
        if kind != CallKind::Wait {
            return self.inner.step(proc, kind, local, last);
        }
        let mut last = last;
        let mut restarted = false;
        loop {
            match self.inner.step(proc, CallKind::Poll, local, last.take()) {
                Action::Return(Some(true)) => return Action::Return(None),
                Action::Return(Some(false)) if !restarted => {
                    local.reset_call();
                    restarted = true;
                }
                Action::Return(_) => {
                    return Action::Fault("inner Poll returned without taking a step".into())
                }
                other => return other,
            }
        }
    }
}
