use std::sync::Arc;

use super::{
    is_true, Action, Algorithm, AlgorithmError, AlgorithmInstance, LocalState, PrimitiveSet,
};
use crate::memory::{Event, LocId, Memory, Op, ProcId, FALSE, TRUE};
use crate::script::CallKind;

/// One shared Boolean `B`. Signal sets it, Poll reads it, Wait spins on it.
#[derive(Debug)]
pub struct CcFlag {
    flag: LocId,
}

impl CcFlag {
    pub fn instance(n: usize, home: ProcId) -> Result<AlgorithmInstance, AlgorithmError> {
        let mut memory = Memory::new(n);
        let flag = memory.alloc("B", home, FALSE)?;
        Ok(AlgorithmInstance::new(Arc::new(CcFlag { flag }), memory))
    }
}

impl Algorithm for CcFlag {
    fn name(&self) -> String {
        "cc_flag".into()
    }

    fn primitives(&self) -> PrimitiveSet {
        PrimitiveSet::read_write()
    }

    fn supports(&self, _kind: CallKind) -> bool {
        true
    }

    fn step(
        &self,
        _proc: ProcId,
        kind: CallKind,
        local: &mut LocalState,
        last: Option<&Event>,
    ) -> Action {
        match (kind, local.pc) {
            (CallKind::Poll, 0) => {
                local.pc = 1;
                Action::Access(Op::Read, self.flag)
            }
            (CallKind::Poll, _) => Action::Return(Some(is_true(last))),
            (CallKind::Signal, 0) => {
                local.pc = 1;
                Action::Access(Op::Write { value: TRUE }, self.flag)
            }
            (CallKind::Signal, _) => Action::Return(None),
            (CallKind::Wait, 0) => {
                local.pc = 1;
                Action::Access(Op::Read, self.flag)
            }
            (CallKind::Wait, _) => {
                if is_true(last) {
                    Action::Return(None)
                } else {
                    Action::Access(Op::Read, self.flag)
                }
            }
        }
    }
}
