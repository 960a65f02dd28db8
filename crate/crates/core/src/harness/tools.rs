//! Proof tools: erasure validation, solo extensions and the stability oracle.

use std::collections::HashSet;

use serde::Serialize;

use super::{History, Sim, SimError};
use crate::cost::CostModel;
use crate::memory::ProcId;
use crate::script::Script;

/// `p` may be erased from `h` iff it is active and nobody else has read a
/// value it wrote.
pub fn validate_erasure(h: &History, p: ProcId) -> bool {
    h.active().contains(&p) && !h.events.iter().any(|e| e.proc != p && e.sees(p))
}

/// Extends `sim` with steps of `p` alone, following `script`, until the
/// script ends or `max_steps` steps were taken.
pub fn solo_extend(sim: &Sim, p: ProcId, script: Script, max_steps: u64) -> Result<Sim, SimError> {
    if sim.is_done(p) && sim.history().participants().contains(&p) {
        return Err(SimError::NotActive(p));
    }
    let mut ext = sim.clone();
    ext.set_script(p, script)?;
    for _ in 0..max_steps {
        if ext.is_done(p) {
            break;
        }
        ext.step(p)?;
    }
    Ok(ext)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "verdict", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Stability {
    /// Solo configuration repeated after `horizon` steps without an RMR.
    Stable { horizon: u64 },
    /// The solo run hit an RMR at step `at_step`.
    Unstable { at_step: u64 },
}

impl Stability {
    pub fn is_stable(self) -> bool {
        matches!(self, Stability::Stable { .. })
    }
}

/// Decides whether `p`, running solo and polling forever, would ever incur
/// an RMR under `model`.
///
/// The solo run is deterministic, so once the configuration (p's program
/// state plus memory) repeats without an RMR, it never will incur one.
/// Gives up with [`SimError::Undecided`] after `bound` distinct
/// configurations.
pub fn stability_oracle(
    sim: &Sim,
    p: ProcId,
    model: CostModel,
    bound: usize,
) -> Result<Stability, SimError> {
    if !sim.history().active().contains(&p) {
        return Err(SimError::NotActive(p));
    }
    if model == CostModel::Cc && !sim.tracks_costs() {
        return Err(SimError::CostsDisabled);
    }
    let mut solo = sim.clone();
    solo.set_script(p, Script::poll_until_true())?;
    let mut seen = HashSet::new();
    let mut steps = 0u64;
    loop {
        if solo.is_done(p) {
            return Ok(Stability::Stable { horizon: steps });
        }
        if !seen.insert((solo.proc_key(p), solo.image())) {
            return Ok(Stability::Stable { horizon: steps });
        }
        if seen.len() > bound {
            return Err(SimError::Undecided {
                proc: p,
                configurations: seen.len(),
            });
        }
        let info = solo.step(p)?;
        if solo.is_rmr(&info, model)? {
            return Ok(Stability::Unstable { at_step: steps });
        }
        steps += 1;
    }
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::algorithm::{build, BuildParams};
    use crate::harness::DEFAULT_STABILITY_BOUND;
    use crate::memory::{Op, TRUE};

    const P1: ProcId = ProcId(1);
    const P2: ProcId = ProcId(2);
    const P3: ProcId = ProcId(3);

    fn sim(name: &str, scripts: Vec<Script>) -> Sim {
        let inst = Arc::new(build(name, &BuildParams::new(scripts.len())).unwrap());
        Sim::new(inst, scripts, true).unwrap()
    }

    #[test]
    fn single_waiter_stable_after_first_poll() {
        let mut s = sim(
            "dsm_single_waiter",
            vec![Script::signal(), Script::poll_until_true()],
        );
        s.run_call(P2, 10).unwrap();
        let v = stability_oracle(&s, P2, CostModel::Dsm, DEFAULT_STABILITY_BOUND).unwrap();
        assert_eq!(v, Stability::Stable { horizon: 1 });
    }

    #[test]
    fn cc_flag_unstable_under_dsm_stable_under_cc() {
        let mut s = sim("cc_flag", vec![Script::signal(), Script::poll_until_true()]);
        s.run_call(P2, 10).unwrap();
        let dsm = stability_oracle(&s, P2, CostModel::Dsm, DEFAULT_STABILITY_BOUND).unwrap();
        assert_eq!(dsm, Stability::Unstable { at_step: 0 });
        let cc = stability_oracle(&s, P2, CostModel::Cc, DEFAULT_STABILITY_BOUND).unwrap();
        assert!(cc.is_stable());
    }

    #[test]
    fn queue_waiter_stable_after_first_poll() {
        let mut s = sim(
            "dsm_queue",
            vec![Script::signal(), Script::poll_until_true(), Script::idle()],
        );
        s.run_call(P2, 10).unwrap();
        let v = stability_oracle(&s, P2, CostModel::Dsm, DEFAULT_STABILITY_BOUND).unwrap();
        assert!(v.is_stable());
        // Before the first Poll the waiter must go remote.
        let fresh = sim(
            "dsm_queue",
            vec![Script::signal(), Script::poll_until_true(), Script::idle()],
        );
        assert!(matches!(
            stability_oracle(&fresh, P2, CostModel::Dsm, DEFAULT_STABILITY_BOUND),
            Err(SimError::NotActive(_))
        ));
    }

    #[test]
    fn solo_extension_of_stable_waiter_is_free() {
        let mut s = sim(
            "dsm_single_waiter",
            vec![Script::signal(), Script::poll_until_true()],
        );
        s.run_call(P2, 10).unwrap();
        let before = s.ledger().unwrap().process(P2).metrics.rmr_dsm;
        let ext = solo_extend(&s, P2, Script::polls(100), 1_000).unwrap();
        assert_eq!(ext.history().len(), s.history().len() + 100);
        assert_eq!(ext.ledger().unwrap().process(P2).metrics.rmr_dsm, before);
    }

    #[test]
    fn cc_flag_solo_pays_per_poll_under_dsm() {
        let mut s = sim("cc_flag", vec![Script::signal(), Script::poll_until_true()]);
        s.run_call(P2, 10).unwrap();
        let ext = solo_extend(&s, P2, Script::polls(5), 100).unwrap();
        assert_eq!(ext.ledger().unwrap().process(P2).metrics.rmr_dsm, 6);
    }

    #[test]
    fn solo_extend_then_replay_matches() {
        let mut s = sim(
            "dsm_registration",
            vec![
                Script::signal(),
                Script::poll_until_true(),
                Script::poll_until_true(),
            ],
        );
        s.run_policy(
            &crate::harness::SchedulePolicy::Explicit(vec![P2, P3, P2, P1]),
            10,
        )
        .unwrap();
        let ext = solo_extend(&s, P2, Script::polls(3), 100).unwrap();
        let replayed = Sim::replay(
            Arc::clone(ext.instance()),
            ext.scripts().to_vec(),
            ext.directives(),
            true,
        )
        .unwrap();
        assert_eq!(replayed.history(), ext.history());
    }

    #[test]
    fn solo_extend_refuses_terminated() {
        let mut s = sim("cc_flag", vec![Script::signal(), Script::polls(1)]);
        s.run_call(P1, 10).unwrap();
        assert!(s.is_done(P1));
        assert!(matches!(
            solo_extend(&s, P1, Script::polls(1), 10),
            Err(SimError::NotActive(_))
        ));
    }

    #[test]
    fn sees_and_touches() {
        let mut s = sim(
            "dsm_single_waiter",
            vec![Script::signal(), Script::poll_until_true(), Script::idle()],
        );
        // p2's first Poll writes W; p1's Signal writes S, reads W (sees p2)
        // and writes V[2] (touches p2).
        s.run_call(P2, 10).unwrap();
        s.run_call(P1, 10).unwrap();
        let h = s.history();
        assert!(h.sees(P1, P2));
        assert!(h.touches(P1, P2));
        assert!(!h.sees(P2, P1));
        assert!(h.touches(P2, P1));
        assert!(!h.sees(P1, P3) && !h.touches(P1, P3));
    }

    #[test]
    fn touching_without_reading_is_not_seeing() {
        let mut s = sim(
            "dsm_fixed_waiters",
            vec![Script::signal(), Script::poll_until_true(), Script::idle()],
        );
        s.run_call(P1, 10).unwrap();
        let h = s.history();
        assert!(h.touches(P1, P2));
        assert!(!h.sees(P1, P2));
        assert_eq!(h.events[0].op, Op::Write { value: TRUE });
    }

    #[test]
    fn erasure_validation() {
        // Invisible waiter: its writes are never read.
        let mut s = sim(
            "dsm_single_waiter",
            vec![Script::signal(), Script::poll_until_true(), Script::idle()],
        );
        s.step(P2).unwrap(); // W := 2
        assert!(validate_erasure(s.history(), P2));
        s.step(P1).unwrap(); // S := 1
        s.step(P1).unwrap(); // read W, sees p2
        assert!(!validate_erasure(s.history(), P2));
        assert!(matches!(s.erase(P2), Err(SimError::ErasureRefused(_))));
    }

    #[test]
    fn erasing_an_unseen_write() {
        let mut s = sim(
            "dsm_single_waiter",
            vec![Script::signal(), Script::polls(1), Script::idle()],
        );
        s.step(P2).unwrap();
        let h = s.history().clone();
        assert!(validate_erasure(&h, P2));
        let erased = s.erase(P2).unwrap();
        assert_eq!(erased.history().len(), h.len() - 1);
    }

    #[test]
    fn erase_removes_exactly_the_erased_steps() {
        let mut s = sim(
            "dsm_fixed_waiters",
            vec![Script::signal(), Script::polls(3), Script::polls(3)],
        );
        s.run_policy(
            &crate::harness::SchedulePolicy::Explicit(vec![P2, P3, P2, P1, P3]),
            10,
        )
        .unwrap();
        let h = s.history().clone();
        let p2_steps = h.events_of(P2).count();
        let erased = s.erase(P2).unwrap();
        assert_eq!(erased.history().len(), h.len() - p2_steps);
        assert_eq!(erased.history().events_of(P2).count(), 0);

        let a = s.erase(P2).unwrap().erase(P3).unwrap();
        let b = s.erase(P3).unwrap().erase(P2).unwrap();
        assert_eq!(a.history(), b.history());
    }
}
