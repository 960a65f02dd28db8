use std::sync::Arc;

use super::{
    alloc_local_flags, is_true, value_of, Action, Algorithm, AlgorithmError, AlgorithmInstance,
    LocalState, PreconditionError, PrimitiveSet,
};
use crate::memory::{Event, LocId, Memory, Op, ProcId, FALSE, NIL, TRUE};
use crate::script::{CallKind, Script};

/// At most one waiter, identity unknown in advance.
///
/// The first Poll publishes the waiter's id in `W` and then reads `S`; later
/// Polls spin on the waiter's own `V[i]`. Signal sets `S`, reads `W`, and if
/// a waiter has announced itself writes its `V[j]`.
#[derive(Debug)]
pub struct SingleWaiter {
    waiter_id: LocId,
    signal: LocId,
    local_flags: Vec<LocId>,
    skip_remote_write: bool,
}

impl SingleWaiter {
    pub fn instance(n: usize, global_home: ProcId) -> Result<AlgorithmInstance, AlgorithmError> {
        Self::build(n, global_home, false)
    }

    /// A broken variant whose Signal never writes the waiter's `V[j]`.
    /// Exists to make sure the checkers can catch a real bug.
    pub fn mutant(n: usize, global_home: ProcId) -> Result<AlgorithmInstance, AlgorithmError> {
        Self::build(n, global_home, true)
    }

    fn build(
        n: usize,
        global_home: ProcId,
        skip_remote_write: bool,
    ) -> Result<AlgorithmInstance, AlgorithmError> {
        let mut memory = Memory::new(n);
        let waiter_id = memory.alloc("W", global_home, NIL)?;
        let signal = memory.alloc("S", global_home, FALSE)?;
        let local_flags = alloc_local_flags(&mut memory, "V")?;
        let algo = SingleWaiter {
            waiter_id,
            signal,
            local_flags,
            skip_remote_write,
        };
        Ok(AlgorithmInstance::new(Arc::new(algo), memory))
    }
}

impl Algorithm for SingleWaiter {
    fn name(&self) -> String {
        if self.skip_remote_write {
            "dsm_single_waiter_mutant".into()
        } else {
            "dsm_single_waiter".into()
        }
    }

    fn primitives(&self) -> PrimitiveSet {
        PrimitiveSet::read_write()
    }

    fn supports(&self, kind: CallKind) -> bool {
        kind != CallKind::Wait
    }

    fn check_roles(&self, scripts: &[Script]) -> Result<(), PreconditionError> {
        let mut pollers = scripts
            .iter()
            .enumerate()
            .filter(|(_, s)| s.calls(CallKind::Poll) || s.calls(CallKind::Wait))
            .map(|(i, _)| ProcId::from_index(i));
        if let (Some(first), Some(second)) = (pollers.next(), pollers.next()) {
            return Err(PreconditionError::SecondWaiter { first, second });
        }
        Ok(())
    }

    fn step(
        &self,
        proc: ProcId,
        kind: CallKind,
        local: &mut LocalState,
        last: Option<&Event>,
    ) -> Action {
        match kind {
            CallKind::Poll if !local.joined => match local.pc {
                0 => {
                    local.pc = 1;
                    Action::Access(Op::Write { value: proc.word() }, self.waiter_id)
                }
                1 => {
                    local.pc = 2;
                    Action::Access(Op::Read, self.signal)
                }
                _ => {
                    local.joined = true;
                    Action::Return(Some(is_true(last)))
                }
            },
            CallKind::Poll => match local.pc {
                0 => {
                    local.pc = 1;
                    Action::Access(Op::Read, self.local_flags[proc.index()])
                }
                _ => Action::Return(Some(is_true(last))),
            },
            CallKind::Signal => match local.pc {
                0 => {
                    local.pc = 1;
                    Action::Access(Op::Write { value: TRUE }, self.signal)
                }
                1 => {
                    local.pc = 2;
                    Action::Access(Op::Read, self.waiter_id)
                }
                2 => {
                    let waiter = value_of(last);
                    if waiter == NIL || self.skip_remote_write {
                        return Action::Return(None);
                    }
                    match self.local_flags.get((waiter - 1) as usize) {
                        Some(&flag) if waiter > 0 => {
                            local.pc = 3;
                            Action::Access(Op::Write { value: TRUE }, flag)
                        }
                        _ => Action::Fault(format!("W holds invalid process id {waiter}")),
                    }
                }
                _ => Action::Return(None),
            },
            CallKind::Wait => Action::Fault("Wait needs the blocking wrapper".into()),
        }
    }
}
