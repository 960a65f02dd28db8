//! Batch experiments behind the command-line front end.
//!
//! Each command takes a resolved [`ExperimentConfig`] and produces the text
//! to emit plus an [`ExitCode`]. Records never contain timestamps, so equal
//! configurations give byte-identical output.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::algorithm::{build, AlgorithmError, AlgorithmInstance, BuildParams, BLOCKING_SUFFIX};
use crate::checker::{
    any_failure, check_amortized, check_blocking, check_polling, check_waitfree, Amortized,
    Violation,
};
use crate::cost::{CostModel, Metrics, ProcessCounts};
use crate::harness::adversary::{
    adversary_separation, AdversaryError, AdversaryOptions, SeparationReport, SignalerChoice,
};
use crate::harness::{explore, EnumerateOptions, SchedulePolicy, Sim, SimError, Witness};
use crate::memory::ProcId;
use crate::script::Script;

pub const BUDGET_ENV: &str = "RMRSIM_BUDGET";
pub const DEFAULT_BUDGET: u64 = 100_000;
pub const DEFAULT_DEPTH: usize = 25;
pub const DEFAULT_C: u64 = 3;
pub const MAX_CHECK_PROCESSES: usize = 4;
pub const DEFAULT_MAX_STATES: u64 = 5_000_000;

/// Process exit status contract.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExitCode {
    Clean = 0,
    Violation = 1,
    Usage = 2,
    Overflow = 3,
    Inapplicable = 4,
}

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Algorithm(#[from] AlgorithmError),
    #[error("simulation failed: {0}")]
    Sim(SimError),
    #[error("state space overflow after {explored} states")]
    Overflow { explored: u64, partial: String },
    #[error("{0}")]
    Inapplicable(String),
}

impl ExperimentError {
    pub fn exit_code(&self) -> ExitCode {
        match self {
            ExperimentError::Usage(_) | ExperimentError::Algorithm(_) => ExitCode::Usage,
            ExperimentError::Sim(SimError::Precondition(_)) => ExitCode::Usage,
            ExperimentError::Sim(SimError::Overflow { .. }) => ExitCode::Overflow,
            ExperimentError::Sim(_) => ExitCode::Violation,
            ExperimentError::Overflow { .. } => ExitCode::Overflow,
            ExperimentError::Inapplicable(_) => ExitCode::Inapplicable,
        }
    }
}

impl From<SimError> for ExperimentError {
    fn from(e: SimError) -> Self {
        ExperimentError::Sim(e)
    }
}

impl From<AdversaryError> for ExperimentError {
    fn from(e: AdversaryError) -> Self {
        match e {
            AdversaryError::NonStabilizing { .. } | AdversaryError::Inapplicable(_) => {
                ExperimentError::Inapplicable(e.to_string())
            }
            AdversaryError::NoSignaler => ExperimentError::Usage(e.to_string()),
            AdversaryError::Sim(s) => s.into(),
        }
    }
}

fn usage(msg: impl Into<String>) -> ExperimentError {
    ExperimentError::Usage(msg.into())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelChoice {
    Dsm,
    Cc,
    Both,
}

impl ModelChoice {
    pub fn models(self) -> Vec<CostModel> {
        match self {
            ModelChoice::Dsm => vec![CostModel::Dsm],
            ModelChoice::Cc => vec![CostModel::Cc],
            ModelChoice::Both => vec![CostModel::Dsm, CostModel::Cc],
        }
    }
}

impl FromStr for ModelChoice {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "dsm" => Ok(ModelChoice::Dsm),
            "cc" => Ok(ModelChoice::Cc),
            "both" => Ok(ModelChoice::Both),
            _ => Err(format!("unknown model `{s}` (expected dsm, cc or both)")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
}

impl FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "json" => Ok(Format::Json),
            "csv" => Ok(Format::Csv),
            _ => Err(format!("unknown format `{s}` (expected json or csv)")),
        }
    }
}

/// Either a number of waiters or their exact ids.
///
/// On the command line a bare number is a count and a comma-separated list
/// is a set of ids (write `3,` for the single id 3).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum WaiterSpec {
    Count(usize),
    Ids(Vec<u32>),
}

impl FromStr for WaiterSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let bad = |_| format!("bad waiter spec `{s}`");
        if s.contains(',') {
            s.split(',')
                .filter(|t| !t.trim().is_empty())
                .map(|t| t.trim().parse().map_err(bad))
                .collect::<Result<_, _>>()
                .map(WaiterSpec::Ids)
        } else {
            s.trim().parse().map(WaiterSpec::Count).map_err(bad)
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum ScheduleSpec {
    RoundRobin,
    Random,
    Explicit(Vec<ProcId>),
    Exhaustive(usize),
}

impl FromStr for ScheduleSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let (head, tail) = s.split_once(':').unwrap_or((s, ""));
        match (head, tail) {
            ("round-robin", "") => Ok(ScheduleSpec::RoundRobin),
            ("random", "") => Ok(ScheduleSpec::Random),
            ("explicit", ids) => ids
                .split(',')
                .map(|t| t.trim().trim_start_matches('p').parse().map(ProcId))
                .collect::<Result<_, _>>()
                .map(ScheduleSpec::Explicit)
                .map_err(|_| format!("bad explicit schedule `{s}`")),
            ("exhaustive", d) => d
                .parse()
                .map(ScheduleSpec::Exhaustive)
                .map_err(|_| format!("bad exhaustive depth `{s}`")),
            _ => Err(format!(
                "unknown schedule `{s}` (expected round-robin, random, explicit:ID,... or exhaustive:DEPTH)"
            )),
        }
    }
}

impl fmt::Display for ScheduleSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScheduleSpec::RoundRobin => f.write_str("round-robin"),
            ScheduleSpec::Random => f.write_str("random"),
            ScheduleSpec::Explicit(ids) => {
                let ids: Vec<String> = ids.iter().map(|p| p.0.to_string()).collect();
                write!(f, "explicit:{}", ids.join(","))
            }
            ScheduleSpec::Exhaustive(d) => write!(f, "exhaustive:{d}"),
        }
    }
}

impl From<ScheduleSpec> for String {
    fn from(s: ScheduleSpec) -> String {
        s.to_string()
    }
}

impl TryFrom<String> for ScheduleSpec {
    type Error = String;

    fn try_from(s: String) -> Result<Self, String> {
        s.parse()
    }
}

/// Experiment parameters. Every field is optional so a config file and
/// command-line flags can be layered with [`ExperimentConfig::overlay`].
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub algorithm: Option<String>,
    pub model: Option<ModelChoice>,
    pub n: Option<usize>,
    pub waiters: Option<WaiterSpec>,
    pub schedule: Option<ScheduleSpec>,
    pub seed: Option<u64>,
    pub budget: Option<u64>,
    pub c: Option<u64>,
    #[serde(rename = "W")]
    pub w: Option<Vec<usize>>,
    pub out: Option<String>,
    pub format: Option<Format>,
    /// Signaler process id; `None` lets each command choose.
    pub signaler: Option<u32>,
    /// Bounded number of Polls per waiter instead of polling until true.
    pub polls: Option<u32>,
    pub erase: Option<bool>,
    pub mutant: Option<bool>,
    pub max_states: Option<u64>,
    /// Per-call step bound for the wait-freedom check.
    pub waitfree: Option<u32>,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, ExperimentError> {
        toml::from_str(text).map_err(|e| usage(format!("bad config: {e}")))
    }

    pub fn from_file(path: &Path) -> Result<Self, ExperimentError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| usage(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    /// `other`'s settings win wherever it has them.
    pub fn overlay(self, other: ExperimentConfig) -> Self {
        macro_rules! pick {
            ($($f:ident),*) => {
                ExperimentConfig { $($f: other.$f.or(self.$f)),* }
            };
        }
        pick!(
            algorithm, model, n, waiters, schedule, seed, budget, c, w, out, format, signaler,
            polls, erase, mutant, max_states, waitfree
        )
    }

    fn algorithm_name(&self) -> Result<String, ExperimentError> {
        let name = self
            .algorithm
            .clone()
            .ok_or_else(|| usage("no algorithm given"))?;
        if self.mutant.unwrap_or(false) {
            match name.as_str() {
                "dsm_single_waiter" => Ok("dsm_single_waiter_mutant".into()),
                other => Err(usage(format!("no mutant available for {other}"))),
            }
        } else {
            Ok(name)
        }
    }

    /// Step budget: flag or file first, then the environment, then the
    /// built-in default.
    pub fn budget(&self) -> Result<u64, ExperimentError> {
        if let Some(b) = self.budget {
            return Ok(b);
        }
        match std::env::var(BUDGET_ENV) {
            Ok(v) => v
                .trim()
                .parse()
                .map_err(|_| usage(format!("{BUDGET_ENV}={v} is not a step count"))),
            Err(_) => Ok(DEFAULT_BUDGET),
        }
    }

    fn c(&self) -> Result<u64, ExperimentError> {
        match self.c.unwrap_or(DEFAULT_C) {
            0 => Err(usage("c must be at least 1")),
            c => Ok(c),
        }
    }
}

/// An instance together with the per-process scripts of one experiment.
#[derive(Clone, Debug)]
pub struct Roles {
    pub instance: Arc<AlgorithmInstance>,
    pub scripts: Vec<Script>,
    pub signaler: ProcId,
    pub waiters: Vec<ProcId>,
}

/// Default roles: one signaler (`--signaler`, else p1), the waiters
/// (`--waiters`, else everyone else, or one waiter for the single-waiter
/// algorithm), and idle processes for the rest.
pub fn roles(cfg: &ExperimentConfig, default_n: usize) -> Result<Roles, ExperimentError> {
    let name = cfg.algorithm_name()?;
    let n = cfg.n.unwrap_or(default_n);
    if n < 1 {
        return Err(usage("n must be at least 1"));
    }
    let signaler = ProcId(cfg.signaler.unwrap_or(1));
    if signaler.0 == 0 || signaler.index() >= n {
        return Err(usage(format!("signaler {signaler} is outside 1..={n}")));
    }
    let others = (1..=n as u32).map(ProcId).filter(|&p| p != signaler);
    let waiters: Vec<ProcId> = match &cfg.waiters {
        Some(WaiterSpec::Ids(ids)) => ids.iter().map(|&i| ProcId(i)).collect(),
        Some(WaiterSpec::Count(c)) => {
            if *c > n - 1 {
                return Err(usage(format!(
                    "{c} waiters need a distinct signaler: n must be at least {}",
                    c + 1
                )));
            }
            others.take(*c).collect()
        }
        None if name.starts_with("dsm_single_waiter") => others.take(1).collect(),
        None => others.collect(),
    };
    for &w in &waiters {
        if w == signaler {
            return Err(usage(format!("{w} cannot be both signaler and waiter")));
        }
        if w.0 == 0 || w.index() >= n {
            return Err(usage(format!("waiter {w} is outside 1..={n}")));
        }
    }
    let mut params = BuildParams::new(n).with_waiters(waiters.clone());
    if cfg.signaler.is_some() {
        params = params.with_signaler(signaler);
    }
    let instance = Arc::new(build(&name, &params)?);
    let waiter_script = if name.ends_with(BLOCKING_SUFFIX) {
        Script::wait()
    } else {
        match cfg.polls {
            Some(k) => Script::polls(k),
            None => Script::poll_until_true(),
        }
    };
    let scripts = (1..=n as u32)
        .map(ProcId)
        .map(|p| {
            if p == signaler {
                Script::signal()
            } else if waiters.contains(&p) {
                waiter_script.clone()
            } else {
                Script::idle()
            }
        })
        .collect();
    Ok(Roles {
        instance,
        scripts,
        signaler,
        waiters,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct RunRecord {
    pub algorithm: String,
    pub model: ModelChoice,
    pub n: usize,
    pub schedule: String,
    pub seed: u64,
    pub budget: u64,
    /// False when the budget ran out with calls still open.
    pub complete: bool,
    pub k: usize,
    pub steps: usize,
    pub per_process: BTreeMap<String, ProcessCounts>,
    pub totals: Metrics,
    pub cc_read_rmrs: u64,
    pub nontrivial: u64,
    pub amortized: BTreeMap<CostModel, Amortized>,
    pub violations: Vec<Violation>,
}

/// The text to emit and the exit status to report.
#[derive(Clone, Debug)]
pub struct Output {
    pub text: String,
    pub exit: ExitCode,
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("records serialize");
    s.push('\n');
    s
}

fn csv_text<T: Serialize>(rows: impl IntoIterator<Item = T>) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.serialize(row).expect("rows serialize");
    }
    String::from_utf8(w.into_inner().expect("in-memory writer")).expect("utf-8")
}

fn policy(cfg: &ExperimentConfig) -> Result<SchedulePolicy, ExperimentError> {
    match cfg.schedule.clone().unwrap_or(ScheduleSpec::RoundRobin) {
        ScheduleSpec::RoundRobin => Ok(SchedulePolicy::RoundRobin),
        ScheduleSpec::Random => Ok(SchedulePolicy::Random {
            seed: cfg.seed.unwrap_or(0),
        }),
        ScheduleSpec::Explicit(ids) => Ok(SchedulePolicy::Explicit(ids)),
        ScheduleSpec::Exhaustive(_) => Err(usage("exhaustive schedules belong to `check`")),
    }
}

/// Runs one simulation and checks the resulting history.
pub fn run_record(cfg: &ExperimentConfig) -> Result<RunRecord, ExperimentError> {
    let roles = roles(cfg, 4)?;
    let policy = policy(cfg)?;
    let budget = cfg.budget()?;
    let c = cfg.c()?;
    let model = cfg.model.unwrap_or(ModelChoice::Both);
    let n = roles.scripts.len();
    if let SchedulePolicy::Explicit(ids) = &policy {
        if let Some(p) = ids.iter().find(|p| p.0 == 0 || p.index() >= n) {
            return Err(usage(format!(
                "explicit schedule names {p}, outside 1..={n}"
            )));
        }
    }
    let mut sim = Sim::new(Arc::clone(&roles.instance), roles.scripts, true)?;
    match sim.run_policy(&policy, budget) {
        Err(SimError::ProcessDone(p)) => {
            return Err(usage(format!(
                "explicit schedule steps {p} after it finished"
            )))
        }
        other => other?,
    }
    let h = sim.history();
    let ledger = sim.ledger().expect("costs tracked");
    let mut violations = check_polling(h);
    violations.extend(check_blocking(h));
    if let Some(b) = cfg.waitfree {
        violations.extend(check_waitfree([h], b));
    }
    Ok(RunRecord {
        algorithm: roles.instance.name(),
        model,
        n,
        schedule: cfg
            .schedule
            .clone()
            .unwrap_or(ScheduleSpec::RoundRobin)
            .to_string(),
        seed: cfg.seed.unwrap_or(0),
        budget,
        complete: sim.all_done(),
        k: h.participants().len(),
        steps: h.len(),
        per_process: ledger
            .per_process()
            .iter()
            .map(|(p, c)| (p.to_string(), *c))
            .collect(),
        totals: ledger.totals(),
        cc_read_rmrs: ledger.total_cc_read_rmrs(),
        nontrivial: ledger.total_nontrivial(),
        amortized: model
            .models()
            .into_iter()
            .map(|m| (m, check_amortized(h, c, m)))
            .collect(),
        violations,
    })
}

#[derive(Serialize)]
struct ProcessRow<'a> {
    proc: &'a str,
    rmr_dsm: u64,
    rmr_cc: u64,
    msg_bus: u64,
    msg_dir: u64,
    steps: u64,
}

pub fn cmd_run(cfg: &ExperimentConfig) -> Result<Output, ExperimentError> {
    let record = run_record(cfg)?;
    let exit = if any_failure(&record.violations) {
        ExitCode::Violation
    } else {
        ExitCode::Clean
    };
    let text = match cfg.format.unwrap_or(Format::Json) {
        Format::Json => to_json(&record),
        Format::Csv => csv_text(record.per_process.iter().map(|(p, c)| ProcessRow {
            proc: p,
            rmr_dsm: c.metrics.rmr_dsm,
            rmr_cc: c.metrics.rmr_cc,
            msg_bus: c.metrics.msg_bus,
            msg_dir: c.metrics.msg_dir,
            steps: c.metrics.steps,
        })),
    };
    Ok(Output { text, exit })
}

#[derive(Clone, Debug, Serialize)]
pub struct CheckSummary {
    pub algorithm: String,
    pub n: usize,
    pub depth: usize,
    pub states: u64,
    pub histories_explored: u64,
    pub truncated: u64,
    pub violations: usize,
    pub witnesses: Vec<Witness>,
}

/// Exhaustive check of the polling and blocking properties.
pub fn check_summary(cfg: &ExperimentConfig) -> Result<CheckSummary, ExperimentError> {
    let n = cfg.n.unwrap_or(3);
    if n > MAX_CHECK_PROCESSES {
        return Err(usage(format!(
            "exhaustive checking is limited to n <= {MAX_CHECK_PROCESSES}, got {n}"
        )));
    }
    let depth = match &cfg.schedule {
        None => DEFAULT_DEPTH,
        Some(ScheduleSpec::Exhaustive(d)) => *d,
        Some(other) => {
            return Err(usage(format!(
                "`check` needs an exhaustive schedule, got {other}"
            )))
        }
    };
    let roles = roles(cfg, 3)?;
    let root = Sim::new(Arc::clone(&roles.instance), roles.scripts, false)?;
    let limit = cfg.max_states.unwrap_or(DEFAULT_MAX_STATES);
    let options = EnumerateOptions::new(depth).with_limit(limit);
    let report = match explore(&root, options, 8) {
        Err(SimError::Overflow { explored }) => {
            let partial = to_json(&serde_json::json!({
                "algorithm": roles.instance.name(),
                "n": n,
                "depth": depth,
                "overflow": true,
                "states": explored,
            }));
            return Err(ExperimentError::Overflow { explored, partial });
        }
        other => other?,
    };
    Ok(CheckSummary {
        algorithm: roles.instance.name(),
        n,
        depth,
        states: report.states,
        histories_explored: report.histories,
        truncated: report.truncated,
        violations: report.violations().count(),
        witnesses: report.witnesses,
    })
}

pub fn cmd_check(cfg: &ExperimentConfig) -> Result<Output, ExperimentError> {
    let summary = check_summary(cfg)?;
    let exit = if summary.violations > 0 {
        ExitCode::Violation
    } else {
        ExitCode::Clean
    };
    Ok(Output {
        text: to_json(&summary),
        exit,
    })
}

/// A drill report plus the amortized verdict on the drill's history.
#[derive(Clone, Debug, Serialize)]
pub struct AdversaryRecord {
    #[serde(flatten)]
    pub report: SeparationReport,
    pub c: u64,
    pub amortized: Amortized,
}

/// Runs the drill with `w` waiters p2..p(w+1) in a system of w+1 processes.
pub fn drill(
    algorithm: &str,
    w: usize,
    model: CostModel,
    cfg: &ExperimentConfig,
) -> Result<AdversaryRecord, ExperimentError> {
    if w == 0 {
        return Err(usage("the drill needs at least one waiter"));
    }
    let n = (w + 1).max(cfg.n.unwrap_or(0));
    let mut params = BuildParams::new(n);
    if let Some(s) = cfg.signaler {
        params = params.with_signaler(ProcId(s));
    }
    let waiters: Vec<ProcId> = (2..=w as u32 + 1).map(ProcId).collect();
    params = params.with_waiters(waiters.clone());
    let instance = Arc::new(build(algorithm, &params)?);
    let mut options = AdversaryOptions::new(model);
    options.erase_on_discovery = cfg.erase.unwrap_or(false);
    options.call_budget = cfg.budget()?;
    if let Some(s) = cfg.signaler {
        options.signaler = SignalerChoice::Fixed(ProcId(s));
    }
    let drill = adversary_separation(instance, &waiters, &options)?;
    let c = cfg.c()?;
    Ok(AdversaryRecord {
        amortized: check_amortized(drill.sim.history(), c, model),
        report: drill.report,
        c,
    })
}

fn drill_w(cfg: &ExperimentConfig) -> Result<usize, ExperimentError> {
    match (&cfg.w, &cfg.waiters) {
        (Some(ws), _) if ws.len() == 1 => Ok(ws[0]),
        (Some(_), _) => Err(usage(
            "`adversary` takes a single W; use `sweep` for a list",
        )),
        (None, Some(WaiterSpec::Count(c))) => Ok(*c),
        (None, Some(WaiterSpec::Ids(_))) => {
            Err(usage("the drill places its own waiters; give a count"))
        }
        (None, None) => cfg
            .n
            .filter(|&n| n > 1)
            .map(|n| n - 1)
            .ok_or_else(|| usage("give W (or n)")),
    }
}

fn report_exit(records: &[AdversaryRecord]) -> ExitCode {
    if records.iter().all(|r| r.report.postcondition_holds()) {
        ExitCode::Clean
    } else {
        ExitCode::Violation
    }
}

pub fn cmd_adversary(cfg: &ExperimentConfig) -> Result<Output, ExperimentError> {
    let name = cfg.algorithm_name()?;
    let w = drill_w(cfg)?;
    let records = cfg
        .model
        .unwrap_or(ModelChoice::Dsm)
        .models()
        .into_iter()
        .map(|m| drill(&name, w, m, cfg))
        .collect::<Result<Vec<_>, _>>()?;
    let exit = report_exit(&records);
    let text = match cfg.format.unwrap_or(Format::Json) {
        Format::Json if records.len() == 1 => to_json(&records[0]),
        Format::Json => to_json(&records),
        Format::Csv => csv_text(records.iter().map(SweepRow::from)),
    };
    Ok(Output { text, exit })
}

/// One sweep point. The nine leading columns have a fixed order; `ratio`
/// is total RMRs under the row's model divided by k.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub algorithm: String,
    pub model: CostModel,
    #[serde(rename = "W")]
    pub w: usize,
    pub k: usize,
    pub signaler_rmrs: u64,
    pub total_rmr_dsm: u64,
    pub total_rmr_cc: u64,
    pub msg_bus: u64,
    pub msg_dir: u64,
    pub ratio: String,
}

impl From<&AdversaryRecord> for SweepRow {
    fn from(r: &AdversaryRecord) -> Self {
        let r = &r.report;
        let total = match r.model {
            CostModel::Dsm => r.total_rmr_dsm,
            CostModel::Cc => r.total_rmr_cc,
        };
        SweepRow {
            algorithm: r.algorithm.clone(),
            model: r.model,
            w: r.w,
            k: r.k,
            signaler_rmrs: r.signaler_rmrs,
            total_rmr_dsm: r.total_rmr_dsm,
            total_rmr_cc: r.total_rmr_cc,
            msg_bus: r.msg_bus,
            msg_dir: r.msg_dir,
            ratio: format!("{:.4}", total as f64 / r.k.max(1) as f64),
        }
    }
}

/// Runs the drill for every (algorithm, model, W) in parallel; results are
/// ordered by that key. `algorithm` may be a comma-separated list.
pub fn sweep_records(cfg: &ExperimentConfig) -> Result<Vec<AdversaryRecord>, ExperimentError> {
    let names: Vec<String> = cfg
        .algorithm_name()?
        .split(',')
        .map(|s| s.trim().to_string())
        .collect();
    let ws = cfg
        .w
        .clone()
        .filter(|ws| !ws.is_empty())
        .ok_or_else(|| usage("`sweep` needs a W list"))?;
    let models = cfg.model.unwrap_or(ModelChoice::Dsm).models();
    let mut points: Vec<(String, CostModel, usize)> = Vec::new();
    for name in &names {
        for &m in &models {
            for &w in &ws {
                points.push((name.clone(), m, w));
            }
        }
    }
    points.sort();
    points.dedup();
    points
        .par_iter()
        .map(|(name, m, w)| drill(name, *w, *m, cfg))
        .collect::<Vec<_>>()
        .into_iter()
        .collect()
}

pub fn cmd_sweep(cfg: &ExperimentConfig) -> Result<Output, ExperimentError> {
    let records = sweep_records(cfg)?;
    let exit = report_exit(&records);
    let text = match cfg.format.unwrap_or(Format::Csv) {
        Format::Csv => csv_text(records.iter().map(SweepRow::from)),
        Format::Json => to_json(&records),
    };
    Ok(Output { text, exit })
}

/// Least-squares slope of `ys` against `xs`.
pub fn slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let cov: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let var: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    cov / var
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(algorithm: &str) -> ExperimentConfig {
        ExperimentConfig {
            algorithm: Some(algorithm.into()),
            ..Default::default()
        }
    }

    #[test]
    fn schedule_specs_round_trip() {
        for s in ["round-robin", "random", "explicit:1,2,1", "exhaustive:25"] {
            assert_eq!(s.parse::<ScheduleSpec>().unwrap().to_string(), s);
        }
        assert!("exhaustive:x".parse::<ScheduleSpec>().is_err());
        assert!("fifo".parse::<ScheduleSpec>().is_err());
    }

    #[test]
    fn waiter_specs() {
        assert_eq!("3".parse::<WaiterSpec>().unwrap(), WaiterSpec::Count(3));
        assert_eq!(
            "3,".parse::<WaiterSpec>().unwrap(),
            WaiterSpec::Ids(vec![3])
        );
        assert_eq!(
            "2,4".parse::<WaiterSpec>().unwrap(),
            WaiterSpec::Ids(vec![2, 4])
        );
    }

    #[test]
    fn toml_config_and_overlay() {
        let file = ExperimentConfig::from_toml(
            r#"
            algorithm = "dsm_queue"
            model = "dsm"
            n = 8
            waiters = [2, 3]
            schedule = "random"
            seed = 5
            W = [8, 16]
            "#,
        )
        .unwrap();
        assert_eq!(file.waiters, Some(WaiterSpec::Ids(vec![2, 3])));
        assert_eq!(file.w, Some(vec![8, 16]));
        let flags = ExperimentConfig {
            seed: Some(9),
            ..Default::default()
        };
        let merged = file.overlay(flags);
        assert_eq!(merged.seed, Some(9));
        assert_eq!(merged.n, Some(8));
        assert!(ExperimentConfig::from_toml("colour = 1").is_err());
    }

    #[test]
    fn default_roles() {
        let r = roles(&cfg("dsm_queue"), 4).unwrap();
        assert_eq!(r.signaler, ProcId(1));
        assert_eq!(r.waiters, [ProcId(2), ProcId(3), ProcId(4)]);
        let r = roles(&cfg("dsm_single_waiter"), 4).unwrap();
        assert_eq!(r.waiters, [ProcId(2)]);
        assert!(r.scripts[2].is_idle());
        let r = roles(&cfg("cc_flag+blocking"), 2).unwrap();
        assert_eq!(r.scripts[1], Script::wait());
    }

    #[test]
    fn precondition_is_usage_error() {
        let mut c = cfg("dsm_single_waiter");
        c.waiters = Some(WaiterSpec::Count(2));
        let err = cmd_run(&c).unwrap_err();
        assert_eq!(err.exit_code(), ExitCode::Usage);
        let err = cmd_run(&cfg("no_such_algo")).unwrap_err();
        assert_eq!(err.exit_code(), ExitCode::Usage);
    }

    #[test]
    fn run_is_deterministic() {
        let mut c = cfg("dsm_registration");
        c.schedule = Some(ScheduleSpec::Random);
        c.seed = Some(42);
        c.n = Some(6);
        let a = cmd_run(&c).unwrap();
        let b = cmd_run(&c).unwrap();
        assert_eq!(a.text, b.text);
        assert_eq!(a.exit, ExitCode::Clean);
    }

    #[test]
    fn check_guards_process_count() {
        let mut c = cfg("cc_flag");
        c.n = Some(5);
        assert_eq!(cmd_check(&c).unwrap_err().exit_code(), ExitCode::Usage);
    }

    #[test]
    fn check_finds_mutant() {
        let mut c = cfg("dsm_single_waiter");
        c.mutant = Some(true);
        c.schedule = Some(ScheduleSpec::Exhaustive(12));
        let out = cmd_check(&c).unwrap();
        assert_eq!(out.exit, ExitCode::Violation);
    }

    #[test]
    fn check_overflow_exit_code() {
        let mut c = cfg("dsm_queue");
        c.max_states = Some(10);
        let err = cmd_check(&c).unwrap_err();
        assert_eq!(err.exit_code(), ExitCode::Overflow);
    }

    #[test]
    fn sweep_rows_are_ordered() {
        let mut c = cfg("dsm_registration,dsm_fixed_waiters");
        c.w = Some(vec![8, 4]);
        let rows: Vec<SweepRow> = sweep_records(&c)
            .unwrap()
            .iter()
            .map(SweepRow::from)
            .collect();
        let keys: Vec<(&str, usize)> = rows.iter().map(|r| (r.algorithm.as_str(), r.w)).collect();
        assert_eq!(
            keys,
            [
                ("dsm_fixed_waiters", 4),
                ("dsm_fixed_waiters", 8),
                ("dsm_registration", 4),
                ("dsm_registration", 8)
            ]
        );
        let text = cmd_sweep(&c).unwrap().text;
        assert!(text.starts_with(
            "algorithm,model,W,k,signaler_rmrs,total_rmr_dsm,total_rmr_cc,msg_bus,msg_dir,ratio\n"
        ));
    }

    #[test]
    fn cc_flag_dsm_drill_is_inapplicable() {
        let mut c = cfg("cc_flag");
        c.w = Some(vec![4]);
        assert_eq!(
            cmd_adversary(&c).unwrap_err().exit_code(),
            ExitCode::Inapplicable
        );
    }

    #[test]
    fn slope_of_a_line() {
        let xs = [1.0, 2.0, 3.0];
        assert!((slope(&xs, &[3.0, 5.0, 7.0]) - 2.0).abs() < 1e-12);
    }
}
