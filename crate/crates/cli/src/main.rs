mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

/// Exit 2 for a task that ran and failed, 3 for bad configuration or input.
#[derive(Debug)]
pub enum CliError {
    Task(String),
    Input(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Task(_) => 2,
            CliError::Input(_) => 3,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Task(m) => write!(f, "task failed: {m}"),
            CliError::Input(m) => write!(f, "{m}"),
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "chembot", version, about = "Plan, execute and evaluate desk-scale lab manipulation tasks")]
pub struct Cli {
    /// TOML file with [executor], [planner], [policy], [train] and [eval] sections.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Output directory (default: ./chembot-out, or <runs>/report for eval).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// More log output on stderr (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Decompose a goal into atomic subtasks with the propose/reflect loop.
    Plan(PlanArgs),
    /// Execute a plan's subtasks in order on the simulated arm.
    Simulate(SimulateArgs),
    /// Train the flow policy and progress head.
    Train(TrainArgs),
    /// Write a synthetic demonstration dataset.
    GenData(GenDataArgs),
    /// Recompute metrics, SR bars and smoothness tables from a run directory.
    Eval(EvalArgs),
    /// Serve the execute_skill tool over JSON-RPC.
    Serve(ServeArgs),
    /// Per-category counts of a dataset.
    Stats(StatsArgs),
    /// Term and outcome profile of the episodic memory.
    Profile(ProfileArgs),
}

#[derive(Args, Debug)]
pub struct PlanArgs {
    #[arg(long)]
    pub goal: String,
    /// Scene fixture, JSON or [scene] text.
    #[arg(long)]
    pub scene: PathBuf,
    /// Scripted reasoner/reflector fixture; without it the HTTP backend is used.
    #[arg(long)]
    pub script: Option<PathBuf>,
    /// Episodic memory directory for retrieval (default: $CHEMBOT_MEMORY_DIR).
    #[arg(long)]
    pub memory: Option<PathBuf>,
    #[arg(long)]
    pub iteration_cap: Option<usize>,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    /// plan.json written by `plan`.
    #[arg(long)]
    pub plan: PathBuf,
    /// Policy checkpoint; the re-planning oracle is used without one.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// sync, async_naive or async_rtc.
    #[arg(long)]
    pub mode: Option<String>,
    /// Make the policy emit NaN actions on this queue index (oracle only).
    #[arg(long)]
    pub inject_fault: Option<usize>,
    /// Record the session in this episodic memory directory.
    #[arg(long)]
    pub memory: Option<PathBuf>,
    /// Experiment category stored with the memory record.
    #[arg(long)]
    pub category: Option<String>,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// Dataset directory; a synthetic set is generated from --seed without one.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Synthetic episodes when no --data is given.
    #[arg(long, default_value_t = 200)]
    pub episodes: usize,
    #[arg(long)]
    pub steps: Option<u64>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub checkpoint_every: Option<u64>,
    /// Continue from this checkpoint, appending to metrics.csv.
    #[arg(long)]
    pub resume: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct GenDataArgs {
    #[arg(long, default_value_t = 200)]
    pub n: usize,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long)]
    pub runs: PathBuf,
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long)]
    pub theta: Option<f64>,
}

#[derive(Args, Debug)]
#[group(required = true, multiple = false, args = ["stdio", "listen"])]
pub struct ServeArgs {
    #[arg(long)]
    pub stdio: bool,
    /// host:port
    #[arg(long)]
    pub listen: Option<String>,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct StatsArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Restrict to these categories (repeatable).
    #[arg(long)]
    pub category: Vec<String>,
}

#[derive(Args, Debug)]
pub struct ProfileArgs {
    /// Episodic memory directory (default: $CHEMBOT_MEMORY_DIR).
    #[arg(long)]
    pub memory: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 3 } else { 0 });
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).format_timestamp(None).init();
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("chembot: {e}");
            ExitCode::from(e.code())
        }
    }
}
