use std::sync::Arc;

use proptest::prelude::*;
use rmrsim::algorithm::{build, BuildParams, ALGORITHMS};
use rmrsim::checker::{check_blocking, check_polling};
use rmrsim::cost::{classify_cc, CacheState, RmrLedger};
use rmrsim::harness::{validate_erasure, SchedulePolicy, Sim};
use rmrsim::memory::{last_writer, LocId, Memory, Op, OpKind, ProcId};
use rmrsim::script::Script;

fn op() -> impl Strategy<Value = Op> {
    prop_oneof![
        Just(Op::Read),
        (0i64..3).prop_map(|value| Op::Write { value }),
        (0i64..3, 0i64..3).prop_map(|(expected, new)| Op::Cas { expected, new }),
        Just(Op::Ll),
        (0i64..3).prop_map(|value| Op::Sc { value }),
        Just(Op::Fai),
        (0i64..3).prop_map(|value| Op::Fas { value }),
        Just(Op::Tas),
    ]
}

/// (process 1..=3, op, location 0..3)
fn steps() -> impl Strategy<Value = Vec<(u32, Op, usize)>> {
    prop::collection::vec((1u32..=3, op(), 0usize..3), 0..60)
}

fn memory() -> Memory {
    let mut m = Memory::new(3);
    for (i, name) in ["X", "Y", "Z"].iter().enumerate() {
        m.alloc(name, ProcId(i as u32 + 1), 0).unwrap();
    }
    m
}

proptest! {
    #[test]
    fn last_writer_agrees_with_prefix(steps in steps()) {
        let mut m = memory();
        let mut events = Vec::new();
        for (p, op, loc) in steps {
            let e = m.apply(ProcId(p), op, LocId(loc), None).unwrap();
            prop_assert_eq!(e.writer_before, last_writer(&events, LocId(loc)));
            events.push(e);
        }
        for loc in 0..3 {
            prop_assert_eq!(m.last_writer(LocId(loc)), last_writer(&events, LocId(loc)));
        }
    }

    #[test]
    fn message_bounds(steps in steps()) {
        let mut m = memory();
        let mut ledger = RmrLedger::new();
        for (p, op, loc) in steps {
            let e = m.apply(ProcId(p), op, LocId(loc), None).unwrap();
            ledger.update(&e);
        }
        let t = ledger.totals();
        // One bus message per nontrivial attempt; every directory message
        // destroys a copy that some RMR created.
        prop_assert_eq!(t.msg_bus, ledger.total_nontrivial());
        prop_assert!(t.msg_dir <= t.rmr_cc);
        prop_assert!(t.rmr_cc <= t.steps);
    }

    #[test]
    fn cc_reads_hit_after_a_miss(p in 1u32..=3, loc in 0usize..3, repeats in 1usize..10) {
        let mut m = memory();
        let mut cache = CacheState::new();
        let first = m.apply(ProcId(p), Op::Read, LocId(loc), None).unwrap();
        prop_assert!(classify_cc(&first, &mut cache).is_rmr());
        for _ in 0..repeats {
            let e = m.apply(ProcId(p), Op::Read, LocId(loc), None).unwrap();
            prop_assert!(!classify_cc(&e, &mut cache).is_rmr());
        }
    }

    #[test]
    fn trivial_ops_leave_memory_alone(steps in steps()) {
        let mut m = memory();
        for (p, op, loc) in steps {
            let before = m.image();
            let e = m.apply(ProcId(p), op, LocId(loc), None).unwrap();
            if op.kind() == OpKind::Read {
                prop_assert_eq!(m.image(), before);
                prop_assert!(!e.modified_memory());
            }
        }
    }

    #[test]
    fn random_runs_are_safe(
        algo in 0usize..ALGORITHMS.len(),
        n in 2usize..8,
        seed in any::<u64>(),
        blocking in any::<bool>(),
    ) {
        let base = ALGORITHMS[algo];
        let name = if blocking { format!("{base}+blocking") } else { base.to_string() };
        let waiter = if blocking { Script::wait() } else { Script::poll_until_true() };
        let pollers = if base == "dsm_single_waiter" { 1 } else { n - 1 };
        let scripts: Vec<Script> = (0..n)
            .map(|i| match i {
                0 => Script::signal(),
                i if i <= pollers => waiter.clone(),
                _ => Script::idle(),
            })
            .collect();
        let inst = Arc::new(build(&name, &BuildParams::new(n)).unwrap());
        let mut sim = Sim::new(inst, scripts, true).unwrap();
        sim.run_policy(&SchedulePolicy::Random { seed }, 100_000).unwrap();
        prop_assert!(sim.all_done());
        prop_assert!(check_polling(sim.history()).is_empty());
        prop_assert!(check_blocking(sim.history()).is_empty());
        let recomputed = sim.history().ledger();
        prop_assert_eq!(recomputed.totals(), sim.ledger().unwrap().totals());
    }

    #[test]
    fn erasures_commute(n in 3usize..6, seed in any::<u64>(), steps in 1u64..30) {
        let scripts: Vec<Script> = (0..n)
            .map(|i| if i == 0 { Script::signal() } else { Script::poll_until_true() })
            .collect();
        let inst = Arc::new(build("dsm_fixed_waiters", &BuildParams::new(n)).unwrap());
        let mut sim = Sim::new(inst, scripts, true).unwrap();
        sim.run_policy(&SchedulePolicy::Random { seed }, steps).unwrap();
        let h = sim.history();
        let erasable: Vec<ProcId> = h.active().into_iter().filter(|&p| validate_erasure(h, p)).collect();
        if let [a, b, ..] = erasable[..] {
            let ab = sim.erase(a).unwrap().erase(b).unwrap();
            let ba = sim.erase(b).unwrap().erase(a).unwrap();
            prop_assert_eq!(ab.history(), ba.history());
            prop_assert_eq!(
                ab.history().len(),
                h.len() - h.events_of(a).count() - h.events_of(b).count()
            );
        }
    }
}
