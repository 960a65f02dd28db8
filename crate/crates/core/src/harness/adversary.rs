//! The two-phase separation drill.
//!
//! Waiters poll round-robin until every one of them is stable, finish any
//! Poll in progress, and then a signaler runs Signal solo. Once the waiters
//! are stable nothing they do will tell them about the signal, so the
//! signaler has to reach into each waiter's module itself: in the DSM model
//! that costs one RMR per waiter. Optionally, a waiter is erased just before
//! the signaler would discover it, which keeps the participant count small
//! while the signaler's cost stays high.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::Serialize;
use thiserror::Error;

use super::{stability_oracle, validate_erasure, Sim, SimError, DEFAULT_STABILITY_BOUND};
use crate::algorithm::AlgorithmInstance;
use crate::cost::{CostModel, ProcessCounts};
use crate::memory::ProcId;
use crate::script::Script;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum SignalerChoice {
    /// The lowest-numbered process whose module the waiters never wrote.
    Auto,
    Fixed(ProcId),
}

#[derive(Clone, Debug)]
pub struct AdversaryOptions {
    pub model: CostModel,
    pub signaler: SignalerChoice,
    pub erase_on_discovery: bool,
    /// Round-robin rounds allowed before the waiters count as
    /// non-stabilizing.
    pub max_rounds: u64,
    /// Step budget for any single call run solo.
    pub call_budget: u64,
    pub stability_bound: usize,
}

impl AdversaryOptions {
    pub fn new(model: CostModel) -> Self {
        AdversaryOptions {
            model,
            signaler: SignalerChoice::Auto,
            erase_on_discovery: false,
            max_rounds: 64,
            call_budget: 100_000,
            stability_bound: DEFAULT_STABILITY_BOUND,
        }
    }
}

#[derive(Debug, Error)]
pub enum AdversaryError {
    #[error("waiters {unstable:?} were still unstable after {rounds} rounds")]
    NonStabilizing { unstable: Vec<ProcId>, rounds: u64 },
    #[error("every module was written while the waiters stabilized; use more processes")]
    NoSignaler,
    #[error("drill not applicable: {0}")]
    Inapplicable(String),
    #[error(transparent)]
    Sim(#[from] SimError),
}

#[derive(Clone, Debug, Serialize)]
pub struct SeparationReport {
    pub algorithm: String,
    pub model: CostModel,
    #[serde(rename = "W")]
    pub w: usize,
    /// Participants in the final history.
    pub k: usize,
    /// RMRs of the Signal call under the drill's model.
    pub signaler_rmrs: u64,
    pub total_rmr_dsm: u64,
    pub total_rmr_cc: u64,
    pub msg_bus: u64,
    pub msg_dir: u64,
    pub signaler: ProcId,
    pub signal_returned: bool,
    pub rounds: u64,
    pub erased: Vec<ProcId>,
    /// Surviving waiters whose next Poll did not return true.
    pub postcondition_failures: Vec<ProcId>,
    pub per_process: BTreeMap<String, ProcessCounts>,
}

impl SeparationReport {
    pub fn postcondition_holds(&self) -> bool {
        self.postcondition_failures.is_empty()
    }
}

#[derive(Clone, Debug)]
pub struct Drill {
    pub report: SeparationReport,
    /// The simulation right after Signal, before the post-condition probe.
    pub sim: Sim,
}

/// Runs the drill with `waiters` polling. Every other process stays idle
/// until chosen as signaler.
pub fn adversary_separation(
    instance: Arc<AlgorithmInstance>,
    waiters: &[ProcId],
    options: &AdversaryOptions,
) -> Result<Drill, AdversaryError> {
    if options.erase_on_discovery && !instance.primitives().is_read_write() {
        return Err(AdversaryError::Inapplicable(format!(
            "erase-on-discovery needs a read/write-only algorithm, {} uses {}",
            instance.name(),
            instance.primitives()
        )));
    }
    let n = instance.process_count();
    let mut scripts = vec![Script::idle(); n];
    for &w in waiters {
        let slot = scripts
            .get_mut(w.index())
            .filter(|_| w.0 != 0)
            .ok_or(SimError::UnknownProcess(w))?;
        *slot = Script::poll_until_true();
    }
    let mut sim = match Sim::new(Arc::clone(&instance), scripts, true) {
        Err(SimError::Precondition(e)) => return Err(AdversaryError::Inapplicable(e.to_string())),
        other => other?,
    };

    let rounds = stabilize(&mut sim, waiters, options)?;
    for &w in waiters {
        sim.finish_call(w, options.call_budget)?;
    }

    let signaler = choose_signaler(&sim, &instance, options.signaler)?;
    sim.set_script(signaler, Script::signal())?;
    let mut erased = Vec::new();
    let mut signal_call = None;
    for _ in 0..options.call_budget {
        if sim.is_done(signaler) {
            break;
        }
        if options.erase_on_discovery {
            if let Some(p) = discovered(&sim, signaler, waiters, &erased) {
                if validate_erasure(sim.history(), p) {
                    sim = sim.erase(p)?;
                    erased.push(p);
                    continue;
                }
            }
        }
        let info = sim.step(signaler)?;
        signal_call = info.event.call;
        if info.returned.is_some() {
            break;
        }
    }
    let signal_returned = signal_call.is_some()
        && sim
            .history()
            .calls
            .iter()
            .any(|c| Some(c.id) == signal_call && c.returned());

    let ledger = sim.ledger().expect("drill tracks costs");
    let signaler_rmrs = signal_call.map_or(0, |c| ledger.call(c).rmr(options.model));
    let totals = ledger.totals();
    let per_process = ledger
        .per_process()
        .iter()
        .map(|(p, c)| (p.to_string(), *c))
        .collect();

    let mut postcondition_failures = Vec::new();
    if signal_returned {
        let mut probe = sim.clone();
        let survivors: Vec<ProcId> = waiters
            .iter()
            .copied()
            .filter(|&w| w != signaler && !erased.contains(&w))
            .collect();
        for &w in &survivors {
            probe.set_script(w, Script::polls(1))?;
        }
        for &w in &survivors {
            let rec = probe.run_call(w, options.call_budget)?;
            if rec.and_then(|r| r.response) != Some(true) {
                postcondition_failures.push(w);
            }
        }
    }

    let report = SeparationReport {
        algorithm: instance.name(),
        model: options.model,
        w: waiters.len(),
        k: sim.history().participants().len(),
        signaler_rmrs,
        total_rmr_dsm: totals.rmr_dsm,
        total_rmr_cc: totals.rmr_cc,
        msg_bus: totals.msg_bus,
        msg_dir: totals.msg_dir,
        signaler,
        signal_returned,
        rounds,
        erased,
        postcondition_failures,
        per_process,
    };
    Ok(Drill { report, sim })
}

/// Round-robin until the oracle calls every waiter stable. Stability is
/// checked after each of the first few rounds and then at doubling
/// intervals, since a waiter that needs many rounds usually never settles.
fn stabilize(
    sim: &mut Sim,
    waiters: &[ProcId],
    options: &AdversaryOptions,
) -> Result<u64, AdversaryError> {
    let mut rounds = 0u64;
    loop {
        let checkpoint = rounds > 0 && (rounds <= 4 || rounds.is_power_of_two());
        if checkpoint || rounds >= options.max_rounds {
            let mut unstable = Vec::new();
            for &w in waiters {
                if sim.is_done(w) {
                    continue;
                }
                let v = stability_oracle(sim, w, options.model, options.stability_bound)?;
                if !v.is_stable() {
                    unstable.push(w);
                }
            }
            if unstable.is_empty() {
                return Ok(rounds);
            }
            if rounds >= options.max_rounds {
                return Err(AdversaryError::NonStabilizing { unstable, rounds });
            }
        }
        for &w in waiters {
            if !sim.is_done(w) {
                sim.step(w)?;
            }
        }
        rounds += 1;
    }
}

fn choose_signaler(
    sim: &Sim,
    instance: &AlgorithmInstance,
    choice: SignalerChoice,
) -> Result<ProcId, AdversaryError> {
    if let Some(s) = instance.algorithm().fixed_signaler() {
        return Ok(s);
    }
    match choice {
        SignalerChoice::Fixed(p) => Ok(p),
        SignalerChoice::Auto => {
            let written = sim.history().written_modules();
            sim.processes()
                .find(|p| !written.contains(p))
                .ok_or(AdversaryError::NoSignaler)
        }
    }
}

/// The waiter the signaler's next step would see or write into, if any.
fn discovered(
    sim: &Sim,
    signaler: ProcId,
    waiters: &[ProcId],
    erased: &[ProcId],
) -> Option<ProcId> {
    let (op, loc) = sim.pending(signaler)?;
    let memory = sim.memory();
    let candidate = |p: ProcId| p != signaler && waiters.contains(&p) && !erased.contains(&p);
    if op.kind().observes() {
        if let Some(w) = memory.last_writer(loc).filter(|&w| candidate(w)) {
            return Some(w);
        }
    }
    let home = memory.home(loc);
    (!op.is_trivial() && candidate(home)).then_some(home)
}
