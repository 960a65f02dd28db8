use std::sync::Arc;

use super::{
    alloc_local_flags, is_true, value_of, Action, Algorithm, AlgorithmError, AlgorithmInstance,
    LocalState, PrimitiveSet,
};
use crate::memory::{Event, LocId, Memory, Op, OpKind, ProcId, FALSE, NIL, TRUE};
use crate::script::CallKind;

/// Waiters and the signaler both unknown in advance; uses Fetch-And-Increment.
///
/// A waiter's first Poll claims a slot with `FAI(T)`, stores its id in
/// `Q[slot]`, and then reads the global flag `G`. Signal sets `G`, reads `T`
/// once and writes `V[j]` for every id found in `Q[0..T)`. Slots that are
/// claimed but still empty are skipped: their owner reads `G` after filling
/// the slot and so already sees the signal.
#[derive(Debug)]
pub struct QueueSignal {
    slots: Vec<LocId>,
    tail: LocId,
    flag: LocId,
    local_flags: Vec<LocId>,
}

impl QueueSignal {
    pub fn instance(n: usize, global_home: ProcId) -> Result<AlgorithmInstance, AlgorithmError> {
        let mut memory = Memory::new(n);
        let flag = memory.alloc("G", global_home, FALSE)?;
        let tail = memory.alloc("T", global_home, 0)?;
        let slots = (0..n)
            .map(|s| memory.alloc(&format!("Q[{s}]"), global_home, NIL))
            .collect::<Result<Vec<_>, _>>()?;
        let local_flags = alloc_local_flags(&mut memory, "V")?;
        let algo = QueueSignal {
            slots,
            tail,
            flag,
            local_flags,
        };
        Ok(AlgorithmInstance::new(Arc::new(algo), memory))
    }
}

impl Algorithm for QueueSignal {
    fn name(&self) -> String {
        "dsm_queue".into()
    }

    fn primitives(&self) -> PrimitiveSet {
        PrimitiveSet::read_write().with(OpKind::Fai)
    }

    fn supports(&self, kind: CallKind) -> bool {
        kind != CallKind::Wait
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
                    Action::Access(Op::Fai, self.tail)
                }
                1 => {
                    let slot = value_of(last);
                    match self.slots.get(slot as usize) {
                        Some(&q) if slot >= 0 => {
                            local.pc = 2;
                            Action::Access(Op::Write { value: proc.word() }, q)
                        }
                        _ => Action::Fault(format!(
                            "queue capacity {} exceeded (slot {slot})",
                            self.slots.len()
                        )),
                    }
                }
                2 => {
                    local.pc = 3;
                    Action::Access(Op::Read, self.flag)
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
                        return Action::Access(Op::Write { value: TRUE }, self.flag);
                    }
                    1 => {
                        local.pc = 2;
                        return Action::Access(Op::Read, self.tail);
                    }
                    2 => {
                        local.temp = value_of(last).clamp(0, self.slots.len() as i64);
                        local.cursor = 0;
                        local.pc = 3;
                    }
                    // Scan slot `cursor`.
                    3 => {
                        if local.cursor as i64 >= local.temp {
                            return Action::Return(None);
                        }
                        local.pc = 4;
                        return Action::Access(Op::Read, self.slots[local.cursor]);
                    }
                    4 => {
                        let id = value_of(last);
                        if id == NIL {
                            local.cursor += 1;
                            local.pc = 3;
                            continue;
                        }
                        match self.local_flags.get((id - 1) as usize) {
                            Some(&v) if id > 0 => {
                                local.pc = 5;
                                return Action::Access(Op::Write { value: TRUE }, v);
                            }
                            _ => return Action::Fault(format!("queue holds invalid id {id}")),
                        }
                    }
                    _ => {
                        local.cursor += 1;
                        local.pc = 3;
                    }
                }
            },
            CallKind::Wait => Action::Fault("Wait needs the blocking wrapper".into()),
        }
    }
}
