use std::io::Write;
use std::path::PathBuf;
use std::process;

use clap::{Args, Parser, Subcommand};
use rmrsim::experiment::{
    cmd_adversary, cmd_check, cmd_run, cmd_sweep, ExitCode, ExperimentConfig, ExperimentError,
    Format, ModelChoice, Output, ScheduleSpec, WaiterSpec,
};

#[derive(Parser)]
#[command(
    name = "rmrsim",
    version,
    about = "Simulate signaling algorithms and count remote memory references"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one simulation and check its history.
    Run(Flags),
    /// Exhaustively check every interleaving of a small instance.
    Check(Flags),
    /// Run the separation drill for one W.
    Adversary(Flags),
    /// Run the separation drill over a list of W values.
    Sweep(Flags),
}

#[derive(Args)]
struct Flags {
    /// TOML file with defaults; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Algorithm name (comma-separated list for `sweep`).
    #[arg(long)]
    algo: Option<String>,
    /// dsm, cc or both.
    #[arg(long)]
    model: Option<ModelChoice>,
    #[arg(long)]
    n: Option<usize>,
    /// Waiter count, or comma-separated waiter ids.
    #[arg(long)]
    waiters: Option<WaiterSpec>,
    /// round-robin, random, explicit:ID,ID,... or exhaustive:DEPTH.
    #[arg(long)]
    schedule: Option<ScheduleSpec>,
    #[arg(long)]
    seed: Option<u64>,
    /// Step budget (default from RMRSIM_BUDGET, else 100000).
    #[arg(long)]
    budget: Option<u64>,
    /// Amortized RMR constant.
    #[arg(long)]
    c: Option<u64>,
    /// Waiter counts for the drill.
    #[arg(long = "W", value_delimiter = ',')]
    w: Option<Vec<usize>>,
    /// Write output here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    format: Option<Format>,
    /// Signaler process id.
    #[arg(long)]
    signaler: Option<u32>,
    /// Waiters make at most this many Polls.
    #[arg(long)]
    polls: Option<u32>,
    /// Erase each waiter just before the signaler discovers it.
    #[arg(long)]
    erase: bool,
    /// Use the deliberately broken variant of the algorithm.
    #[arg(long)]
    mutant: bool,
    /// State limit for exhaustive checking.
    #[arg(long)]
    max_states: Option<u64>,
    /// Flag calls longer than this many steps.
    #[arg(long)]
    waitfree: Option<u32>,
}

impl Flags {
    fn config(&self) -> Result<ExperimentConfig, ExperimentError> {
        let base = match &self.config {
            Some(path) => ExperimentConfig::from_file(path)?,
            None => ExperimentConfig::default(),
        };
        let flags = ExperimentConfig {
            algorithm: self.algo.clone(),
            model: self.model,
            n: self.n,
            waiters: self.waiters.clone(),
            schedule: self.schedule.clone(),
            seed: self.seed,
            budget: self.budget,
            c: self.c,
            w: self.w.clone(),
            out: self.out.as_ref().map(|p| p.display().to_string()),
            format: self.format,
            signaler: self.signaler,
            polls: self.polls,
            erase: self.erase.then_some(true),
            mutant: self.mutant.then_some(true),
            max_states: self.max_states,
            waitfree: self.waitfree,
        };
        Ok(base.overlay(flags))
    }
}

fn emit(text: &str, out: Option<&str>) -> Result<(), ExperimentError> {
    match out {
        Some(path) => std::fs::write(path, text)
            .map_err(|e| ExperimentError::Usage(format!("cannot write {path}: {e}"))),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(text.as_bytes())
                .and_then(|_| stdout.flush())
                .map_err(|e| ExperimentError::Usage(format!("cannot write output: {e}")))
        }
    }
}

type Handler = fn(&ExperimentConfig) -> Result<Output, ExperimentError>;

fn execute(command: &Command) -> Result<ExitCode, ExperimentError> {
    let (flags, run): (&Flags, Handler) = match command {
        Command::Run(f) => (f, cmd_run),
        Command::Check(f) => (f, cmd_check),
        Command::Adversary(f) => (f, cmd_adversary),
        Command::Sweep(f) => (f, cmd_sweep),
    };
    let cfg = flags.config()?;
    match run(&cfg) {
        Ok(output) => {
            emit(&output.text, cfg.out.as_deref())?;
            Ok(output.exit)
        }
        Err(ExperimentError::Overflow { explored, partial }) => {
            emit(&partial, cfg.out.as_deref())?;
            Err(ExperimentError::Overflow {
                explored,
                partial: String::new(),
            })
        }
        Err(e) => Err(e),
    }
}

fn main() {
    let cli = Cli::parse();
    let code = match execute(&cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("rmrsim: {e}");
            e.exit_code()
        }
    };
    process::exit(code as i32);
}
