//! Correctness checks over recorded histories.
//!
//! Polling semantics: a Poll may return true only once some Signal has
//! begun, and may return false only if no Signal completed before the Poll
//! began. Blocking semantics: a Wait returns only after some Signal has
//! begun. "Begun" means the Signal's first step precedes the Poll's (or
//! Wait's) returning step; a call with no steps has not begun.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::cost::CostModel;
use crate::harness::{CallRecord, History};
use crate::memory::{CallId, ProcId};
use crate::script::CallKind;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ViolationKind {
    PollTrueNoSignal,
    PollFalseAfterSignal,
    WaitBeforeSignal,
    WaitfreeBudget,
    AmortizedBudget,
    HarnessMisuse,
}

impl ViolationKind {
    /// Misuse of the harness is reported but is not a correctness failure.
    pub fn is_failure(self) -> bool {
        self != ViolationKind::HarnessMisuse
    }
}

impl fmt::Display for ViolationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = serde_json::to_value(self).expect("unit variant");
        f.write_str(s.as_str().expect("string"))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub kind: ViolationKind,
    pub calls: Vec<CallId>,
    pub seqs: Vec<u64>,
    pub message: String,
}

impl Violation {
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("violations serialize")
    }
}

pub fn any_failure(violations: &[Violation]) -> bool {
    violations.iter().any(|v| v.kind.is_failure())
}

/// Structural checks on the call relation. Returns the misuse violations
/// and the set of calls to leave out of the semantic checks.
fn structural(h: &History) -> (Vec<Violation>, BTreeSet<CallId>) {
    let mut out = Vec::new();
    let mut excluded = BTreeSet::new();
    let mut by_proc: BTreeMap<ProcId, Vec<&CallRecord>> = BTreeMap::new();
    for c in &h.calls {
        by_proc.entry(c.proc).or_default().push(c);
    }
    let mut misuse = |c: &CallRecord, seqs: Vec<u64>, message: String| {
        excluded.insert(c.id);
        out.push(Violation {
            kind: ViolationKind::HarnessMisuse,
            calls: vec![c.id],
            seqs,
            message,
        });
    };
    for calls in by_proc.values_mut() {
        calls.sort_by_key(|c| c.start_seq);
        let mut saw_true = false;
        let mut prev_end: Option<u64> = None;
        for c in calls.iter() {
            let bad_shape = c.end_seq.is_some_and(|e| e < c.start_seq)
                || c.last_seq < c.start_seq
                || (c.returned() && (c.kind == CallKind::Poll) != c.response.is_some());
            if bad_shape {
                misuse(
                    c,
                    vec![c.start_seq],
                    format!("malformed call record {}", c.id),
                );
                continue;
            }
            if let Some(end) = prev_end {
                if c.start_seq <= end {
                    misuse(
                        c,
                        vec![end, c.start_seq],
                        format!("call {} overlaps the previous call of {}", c.id, c.proc),
                    );
                    continue;
                }
            }
            prev_end = Some(c.end_seq.unwrap_or(u64::MAX));
            if c.kind == CallKind::Poll {
                if saw_true {
                    misuse(
                        c,
                        vec![c.start_seq],
                        format!("{} polled again after a true response", c.proc),
                    );
                    continue;
                }
                saw_true = c.response == Some(true);
            }
        }
    }
    (out, excluded)
}

fn signals(h: &History) -> impl Iterator<Item = &CallRecord> {
    h.calls.iter().filter(|c| c.kind == CallKind::Signal)
}

pub fn check_polling(h: &History) -> Vec<Violation> {
    let (mut out, excluded) = structural(h);
    let first_signal = signals(h).min_by_key(|s| s.start_seq);
    let first_completed = signals(h)
        .filter_map(|s| s.end_seq.map(|e| (e, s)))
        .min_by_key(|(e, _)| *e);
    for p in h
        .calls
        .iter()
        .filter(|c| c.kind == CallKind::Poll && !excluded.contains(&c.id))
    {
        let Some(end) = p.end_seq else { continue };
        match p.response {
            Some(true) => {
                if !first_signal.is_some_and(|s| s.start_seq < end) {
                    out.push(Violation {
                        kind: ViolationKind::PollTrueNoSignal,
                        calls: vec![p.id],
                        seqs: vec![p.start_seq, end],
                        message: format!("{} returned true before any Signal began", p.id),
                    });
                }
            }
            Some(false) => {
                if let Some((s_end, s)) = first_completed.filter(|(e, _)| *e < p.start_seq) {
                    out.push(Violation {
                        kind: ViolationKind::PollFalseAfterSignal,
                        calls: vec![p.id, s.id],
                        seqs: vec![s_end, p.start_seq, end],
                        message: format!(
                            "{} returned false although {} completed before it began",
                            p.id, s.id
                        ),
                    });
                }
            }
            None => {}
        }
    }
    out
}

pub fn check_blocking(h: &History) -> Vec<Violation> {
    let first_signal = signals(h).map(|s| s.start_seq).min();
    h.calls
        .iter()
        .filter(|c| c.kind == CallKind::Wait)
        .filter_map(|w| {
            let end = w.end_seq?;
            if first_signal.is_some_and(|s| s < end) {
                return None;
            }
            Some(Violation {
                kind: ViolationKind::WaitBeforeSignal,
                calls: vec![w.id],
                seqs: vec![w.start_seq, end],
                message: format!("{} returned before any Signal began", w.id),
            })
        })
        .collect()
}

/// Flags every call, finished or not, that took more than `bound` steps.
/// This can only falsify wait-freedom, never establish it.
pub fn check_waitfree<'a>(
    histories: impl IntoIterator<Item = &'a History>,
    bound: u32,
) -> Vec<Violation> {
    let mut out = Vec::new();
    for h in histories {
        for c in h.calls.iter().filter(|c| c.steps > bound) {
            out.push(Violation {
                kind: ViolationKind::WaitfreeBudget,
                calls: vec![c.id],
                seqs: vec![c.start_seq, c.last_seq],
                message: format!(
                    "{} took {} steps, over the budget of {bound}",
                    c.id, c.steps
                ),
            });
        }
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Amortized {
    Pass { total: u64, k: usize },
    Fail { total: u64, k: usize },
}

impl Amortized {
    pub fn passed(self) -> bool {
        matches!(self, Amortized::Pass { .. })
    }

    pub fn to_violation(self, c: u64, model: CostModel) -> Option<Violation> {
        let Amortized::Fail { total, k } = self else {
            return None;
        };
        Some(Violation {
            kind: ViolationKind::AmortizedBudget,
            calls: Vec::new(),
            seqs: Vec::new(),
            message: format!(
                "{total} {model:?} RMRs over {k} participants exceeds {c} per participant"
            ),
        })
    }
}

/// Passes iff the history's total RMRs under `model` are at most `c` per
/// participant.
pub fn check_amortized(h: &History, c: u64, model: CostModel) -> Amortized {
    let k = h.participants().len();
    let total = h.ledger().totals().rmr(model);
    if total <= c * k as u64 {
        Amortized::Pass { total, k }
    } else {
        Amortized::Fail { total, k }
    }
}
