//! Exhaustive exploration of interleavings.
//!
//! [`enumerate`] walks every interleaving explicitly and is only practical
//! for short, loop-free scripts. [`explore`] checks the polling and
//! blocking properties online and merges schedules that reach the same
//! configuration, which keeps spin loops finite.

use std::collections::HashMap;

use serde::Serialize;

use super::{ProcKey, Sim, SimError};
use crate::checker::{check_blocking, check_polling, Violation};
use crate::memory::{MemoryImage, ProcId};
use crate::script::CallKind;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EnumerateOptions {
    /// Maximum number of steps in a history.
    pub depth: usize,
    /// Maximum number of histories (for [`enumerate`]) or distinct states
    /// (for [`explore`]) before giving up with [`SimError::Overflow`].
    pub limit: u64,
}

impl EnumerateOptions {
    pub fn new(depth: usize) -> Self {
        EnumerateOptions {
            depth,
            limit: 5_000_000,
        }
    }

    pub fn with_limit(mut self, limit: u64) -> Self {
        self.limit = limit;
        self
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct EnumerationStats {
    pub histories: u64,
    /// Histories cut off by the depth bound with steps still available.
    pub truncated: u64,
}

/// Calls `visit` on every maximal history reachable from `root` within the
/// depth bound, in a fixed order (lowest process id first).
pub fn enumerate(
    root: &Sim,
    options: EnumerateOptions,
    mut visit: impl FnMut(&Sim),
) -> Result<EnumerationStats, SimError> {
    let mut stats = EnumerationStats::default();
    walk(root, options.depth, options.limit, &mut stats, &mut visit)?;
    Ok(stats)
}

fn walk(
    sim: &Sim,
    remaining: usize,
    limit: u64,
    stats: &mut EnumerationStats,
    visit: &mut impl FnMut(&Sim),
) -> Result<(), SimError> {
    let runnable = sim.runnable();
    if runnable.is_empty() || remaining == 0 {
        if !runnable.is_empty() {
            stats.truncated += 1;
        }
        stats.histories += 1;
        if stats.histories > limit {
            return Err(SimError::Overflow {
                explored: stats.histories - 1,
            });
        }
        visit(sim);
        return Ok(());
    }
    for p in runnable {
        let mut next = sim.clone();
        next.step(p)?;
        walk(&next, remaining - 1, limit, stats, visit)?;
    }
    Ok(())
}

/// A schedule reaching a violation, with the violations found in it.
#[derive(Clone, Debug, Serialize)]
pub struct Witness {
    pub schedule: Vec<ProcId>,
    pub violations: Vec<Violation>,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct ExploreReport {
    /// Distinct (configuration, depth) states visited.
    pub states: u64,
    /// Maximal histories reached: every process done, or depth exhausted.
    pub histories: u64,
    pub truncated: u64,
    pub witnesses: Vec<Witness>,
}

impl ExploreReport {
    pub fn violations(&self) -> impl Iterator<Item = &Violation> {
        self.witnesses.iter().flat_map(|w| &w.violations)
    }
}

/// What the checkers need to remember about the past.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
struct Summary {
    signal_begun: bool,
    signal_completed: bool,
    /// Per process: its open Poll began after some Signal completed.
    late_poll: Vec<bool>,
}

type StateKey = (MemoryImage, Vec<ProcKey>, Summary);

struct Explorer {
    limit: u64,
    max_witnesses: usize,
    seen: HashMap<StateKey, usize>,
    report: ExploreReport,
}

/// Explores every schedule from `root` (which must not have taken any
/// steps yet) up to `options.depth` steps, checking the polling and
/// blocking properties as calls return. Stops after `max_witnesses`
/// violating schedules.
pub fn explore(
    root: &Sim,
    options: EnumerateOptions,
    max_witnesses: usize,
) -> Result<ExploreReport, SimError> {
    let summary = Summary {
        signal_begun: false,
        signal_completed: false,
        late_poll: vec![false; root.process_count()],
    };
    let mut ex = Explorer {
        limit: options.limit,
        max_witnesses: max_witnesses.max(1),
        seen: HashMap::new(),
        report: ExploreReport::default(),
    };
    ex.visit(root, summary, options.depth)?;
    Ok(ex.report)
}

impl Explorer {
    fn done(&self) -> bool {
        self.report.witnesses.len() >= self.max_witnesses
    }

    fn visit(&mut self, sim: &Sim, summary: Summary, remaining: usize) -> Result<(), SimError> {
        let runnable = sim.runnable();
        if runnable.is_empty() || remaining == 0 {
            self.report.histories += 1;
            if !runnable.is_empty() {
                self.report.truncated += 1;
            }
            return Ok(());
        }
        let (image, procs) = sim.config_key();
        let key = (image, procs, summary.clone());
        match self.seen.get(&key) {
            Some(&best) if best >= remaining => return Ok(()),
            _ => {}
        }
        self.seen.insert(key, remaining);
        self.report.states += 1;
        if self.report.states > self.limit {
            return Err(SimError::Overflow {
                explored: self.report.states,
            });
        }
        for p in runnable {
            if self.done() {
                break;
            }
            let mut next = sim.clone();
            let starting = next.open_call(p).is_none();
            let info = next.step(p)?;
            let kind = match &info.returned {
                Some(rec) => rec.kind,
                None => next.open_call(p).expect("call in progress").kind,
            };
            let mut s = summary.clone();
            let mut bad = false;
            let i = p.index();
            if starting {
                match kind {
                    CallKind::Signal => s.signal_begun = true,
                    CallKind::Poll => s.late_poll[i] = summary.signal_completed,
                    CallKind::Wait => {}
                }
            }
            if let Some(rec) = &info.returned {
                match (rec.kind, rec.response) {
                    (CallKind::Poll, Some(true)) => bad = !summary.signal_begun,
                    (CallKind::Poll, Some(false)) => bad = s.late_poll[i],
                    (CallKind::Wait, _) => bad = !summary.signal_begun,
                    (CallKind::Signal, _) => s.signal_completed = true,
                    _ => {}
                }
                s.late_poll[i] = false;
            }
            if bad {
                self.record(&next);
                continue;
            }
            self.visit(&next, s, remaining - 1)?;
        }
        Ok(())
    }

    fn record(&mut self, sim: &Sim) {
        let h = sim.history();
        let mut violations = check_polling(h);
        violations.extend(check_blocking(h));
        violations.retain(|v| v.kind.is_failure());
        debug_assert!(!violations.is_empty(), "online and offline checks disagree");
        self.report.histories += 1;
        self.report.witnesses.push(Witness {
            schedule: h.events.iter().map(|e| e.proc).collect(),
            violations,
        });
    }
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::algorithm::{build, BuildParams};
    use crate::script::Script;

    fn root(name: &str, scripts: Vec<Script>) -> Sim {
        let inst = Arc::new(build(name, &BuildParams::new(scripts.len())).unwrap());
        Sim::new(inst, scripts, false).unwrap()
    }

    #[test]
    fn two_by_two_interleavings() {
        let sim = root("cc_flag", vec![Script::polls(2), Script::polls(2)]);
        let mut schedules = Vec::new();
        let stats = enumerate(&sim, EnumerateOptions::new(4), |s| {
            schedules.push(
                s.history()
                    .events
                    .iter()
                    .map(|e| e.proc.0)
                    .collect::<Vec<_>>(),
            );
        })
        .unwrap();
        assert_eq!(stats.histories, 6);
        assert_eq!(stats.truncated, 0);
        assert_eq!(schedules[0], [1, 1, 2, 2]);
        assert_eq!(schedules[5], [2, 2, 1, 1]);
    }

    #[test]
    fn enumerate_overflow_reports_count() {
        let sim = root("cc_flag", vec![Script::polls(2), Script::polls(2)]);
        let err = enumerate(&sim, EnumerateOptions::new(4).with_limit(4), |_| {}).unwrap_err();
        assert!(matches!(err, SimError::Overflow { explored: 4 }));
    }

    #[test]
    fn cc_flag_is_safe() {
        let sim = root(
            "cc_flag",
            vec![
                Script::signal(),
                Script::poll_until_true(),
                Script::poll_until_true(),
            ],
        );
        let report = explore(&sim, EnumerateOptions::new(20), 1).unwrap();
        assert!(report.witnesses.is_empty());
        assert!(report.states > 0);
    }

    #[test]
    fn mutant_is_caught() {
        let sim = root(
            "dsm_single_waiter_mutant",
            vec![Script::signal(), Script::poll_until_true(), Script::idle()],
        );
        let report = explore(&sim, EnumerateOptions::new(20), 1).unwrap();
        let w = &report.witnesses[0];
        assert!(w
            .violations
            .iter()
            .any(|v| v.kind == crate::checker::ViolationKind::PollFalseAfterSignal));
    }

    #[test]
    fn explore_agrees_with_enumerate_on_bounded_scripts() {
        let scripts = vec![Script::signal(), Script::polls(2), Script::polls(2)];
        let sim = root("dsm_registration", scripts);
        let mut bad = 0;
        enumerate(&sim, EnumerateOptions::new(40), |s| {
            let h = s.history();
            if crate::checker::any_failure(&check_polling(h)) {
                bad += 1;
            }
        })
        .unwrap();
        assert_eq!(bad, 0);
        let report = explore(&sim, EnumerateOptions::new(40), 1).unwrap();
        assert!(report.witnesses.is_empty());
    }
}
