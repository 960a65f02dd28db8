use std::sync::Arc;

use super::{
    alloc_array_at, alloc_local_flags, is_true, Action, Algorithm, AlgorithmError,
    AlgorithmInstance, LocalState, PreconditionError, PrimitiveSet,
};
use crate::memory::{Event, LocId, Memory, Op, ProcId, FALSE, TRUE};
use crate::script::{CallKind, Script};

/// Waiters not known in advance, one signaler fixed at construction.
///
/// A waiter's first Poll registers by setting `R[i]` in the signaler's
/// module and then reads `S` (also in the signaler's module). Signal sets
/// `S` before scanning `R`, so a waiter registering mid-scan is guaranteed
/// to see `S` set.
#[derive(Debug)]
pub struct Registration {
    signaler: ProcId,
    registered: Vec<LocId>,
    signal: LocId,
    local_flags: Vec<LocId>,
}

impl Registration {
    pub fn instance(n: usize, signaler: ProcId) -> Result<AlgorithmInstance, AlgorithmError> {
        let mut memory = Memory::new(n);
        let signal = memory.alloc("S", signaler, FALSE)?;
        let registered = alloc_array_at(&mut memory, "R", signaler)?;
        let local_flags = alloc_local_flags(&mut memory, "V")?;
        let algo = Registration {
            signaler,
            registered,
            signal,
            local_flags,
        };
        Ok(AlgorithmInstance::new(Arc::new(algo), memory))
    }
}

impl Algorithm for Registration {
    fn name(&self) -> String {
        "dsm_registration".into()
    }

    fn primitives(&self) -> PrimitiveSet {
        PrimitiveSet::read_write()
    }

    fn supports(&self, kind: CallKind) -> bool {
        kind != CallKind::Wait
    }

    fn fixed_signaler(&self) -> Option<ProcId> {
        Some(self.signaler)
    }

    fn check_roles(&self, scripts: &[Script]) -> Result<(), PreconditionError> {
        for (i, s) in scripts.iter().enumerate() {
            let p = ProcId::from_index(i);
            if s.calls(CallKind::Signal) && p != self.signaler {
                return Err(PreconditionError::NotDesignatedSignaler {
                    proc: p,
                    signaler: self.signaler,
                });
            }
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
                    Action::Access(Op::Write { value: TRUE }, self.registered[proc.index()])
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
            CallKind::Signal => loop {
                match local.pc {
                    0 => {
                        local.pc = 1;
                        return Action::Access(Op::Write { value: TRUE }, self.signal);
                    }
                    // Scan position `cursor`.
                    1 => match self.registered.get(local.cursor) {
                        Some(&r) => {
                            local.pc = 2;
                            return Action::Access(Op::Read, r);
                        }
                        None => return Action::Return(None),
                    },
                    2 => {
                        if is_true(last) {
                            local.pc = 3;
                            return Action::Access(
                                Op::Write { value: TRUE },
                                self.local_flags[local.cursor],
                            );
                        }
                        local.cursor += 1;
                        local.pc = 1;
                    }
                    _ => {
                        local.cursor += 1;
                        local.pc = 1;
                    }
                }
            },
            CallKind::Wait => Action::Fault("Wait needs the blocking wrapper".into()),
        }
    }
}
