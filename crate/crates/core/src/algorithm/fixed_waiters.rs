use std::sync::Arc;

use super::{
    alloc_array_at, alloc_local_flags, is_true, Action, Algorithm, AlgorithmError,
    AlgorithmInstance, BuildParams, LocalState, PreconditionError, PrimitiveSet,
};
use crate::memory::{Event, LocId, Memory, Op, ProcId, TRUE};
use crate::script::{CallKind, Script};

/// Waiter set known in advance. Poll by `p_i` reads the local `V[i]`; Signal
/// writes `V[j]` for every waiter.
///
/// The terminating variant also has each waiter's first Poll raise a
/// participation flag `P[j]` in the signaler's module, and Signal waits for
/// all of them before writing any `V[j]`.
#[derive(Debug)]
pub struct FixedWaiters {
    waiters: Vec<ProcId>,
    local_flags: Vec<LocId>,
    participation: Option<Vec<LocId>>,
}

impl FixedWaiters {
    pub fn instance(
        params: &BuildParams,
        terminating: bool,
    ) -> Result<AlgorithmInstance, AlgorithmError> {
        let mut waiters = params.waiters_or_default();
        waiters.sort();
        waiters.dedup();
        if waiters.is_empty() {
            return Err(AlgorithmError::Config("waiter set must be nonempty".into()));
        }
        let mut memory = Memory::new(params.n);
        let local_flags = alloc_local_flags(&mut memory, "V")?;
        let participation = if terminating {
            Some(alloc_array_at(
                &mut memory,
                "P",
                params.signaler_or_default(),
            )?)
        } else {
            None
        };
        let algo = FixedWaiters {
            waiters,
            local_flags,
            participation,
        };
        Ok(AlgorithmInstance::new(Arc::new(algo), memory))
    }

    pub fn waiters(&self) -> &[ProcId] {
        &self.waiters
    }

    fn signal_plain(&self, local: &mut LocalState) -> Action {
        match self.waiters.get(local.cursor) {
            Some(w) => {
                local.cursor += 1;
                Action::Access(Op::Write { value: TRUE }, self.local_flags[w.index()])
            }
            None => Action::Return(None),
        }
    }
}

impl Algorithm for FixedWaiters {
    fn name(&self) -> String {
        if self.participation.is_some() {
            "dsm_fixed_waiters_term".into()
        } else {
            "dsm_fixed_waiters".into()
        }
    }

    fn primitives(&self) -> PrimitiveSet {
        PrimitiveSet::read_write()
    }

    fn supports(&self, kind: CallKind) -> bool {
        kind != CallKind::Wait
    }

    fn check_roles(&self, scripts: &[Script]) -> Result<(), PreconditionError> {
        for (i, s) in scripts.iter().enumerate() {
            let p = ProcId::from_index(i);
            if (s.calls(CallKind::Poll) || s.calls(CallKind::Wait)) && !self.waiters.contains(&p) {
                return Err(PreconditionError::NotAWaiter(p));
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
            CallKind::Poll => {
                let own = self.local_flags[proc.index()];
                match (&self.participation, local.joined, local.pc) {
                    (Some(flags), false, 0) => {
                        local.pc = 1;
                        Action::Access(Op::Write { value: TRUE }, flags[proc.index()])
                    }
                    (Some(_), false, 1) => {
                        local.pc = 2;
                        Action::Access(Op::Read, own)
                    }
                    (_, _, 0) => {
                        local.pc = 2;
                        Action::Access(Op::Read, own)
                    }
                    _ => {
                        local.joined = true;
                        Action::Return(Some(is_true(last)))
                    }
                }
            }
            CallKind::Signal => {
                let Some(flags) = &self.participation else {
                    return self.signal_plain(local);
                };
                loop {
                    match local.pc {
                        // About to check waiter `cursor`.
                        0 => match self.waiters.get(local.cursor) {
                            Some(w) => {
                                local.pc = 1;
                                return Action::Access(Op::Read, flags[w.index()]);
                            }
                            None => {
                                local.pc = 2;
                                local.cursor = 0;
                            }
                        },
                        // Spinning on P[waiters[cursor]].
                        1 => {
                            if is_true(last) {
                                local.cursor += 1;
                                local.pc = 0;
                            } else {
                                let w = self.waiters[local.cursor];
                                return Action::Access(Op::Read, flags[w.index()]);
                            }
                        }
                        _ => return self.signal_plain(local),
                    }
                }
            }
            CallKind::Wait => Action::Fault("Wait needs the blocking wrapper".into()),
        }
    }
}
