//! Command-line front end: argument parsing, the run configuration file and
//! the mapping from failures to exit codes.
//!
//! Exit codes: 0 success, 2 configuration or precondition, 3 numerical
//! failure, 4 I/O or checkpoint.

mod commands;

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::curriculum::CurriculumConfig;
use crate::dqn::{CheckpointError, DqnError};
use crate::env::{Level, OrderPolicy};
use crate::zyz::{GuardConfig, KinematicModel};

pub use commands::{cmd_eval, cmd_mask_audit, cmd_report, cmd_solve, cmd_train, cmd_zyz_sim};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Numerical(DqnError),
    #[error("{0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::Io(_) => 4,
        }
    }

    pub(crate) fn io(path: &Path, err: impl std::fmt::Display) -> Self {
        CliError::Io(format!("{}: {err}", path.display()))
    }
}

impl From<DqnError> for CliError {
    fn from(e: DqnError) -> Self {
        CliError::Numerical(e)
    }
}

impl From<CheckpointError> for CliError {
    fn from(e: CheckpointError) -> Self {
        CliError::Io(e.to_string())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSettings {
    pub episodes: usize,
    pub level: Level,
    pub order: OrderPolicy,
}

impl Default for EvalSettings {
    fn default() -> Self {
        Self {
            episodes: 10,
            level: Level::One,
            order: OrderPolicy::Shuffled,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AuditSettings {
    pub samples: usize,
}

impl Default for AuditSettings {
    fn default() -> Self {
        Self { samples: 1_000 }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ZyzSettings {
    pub model: KinematicModel,
    pub guard: GuardConfig,
}

/// Everything a command can be configured with. Read from TOML, overridden by
/// flags, and written back to `config.toml` in the output directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub out: PathBuf,
    /// Save the online network every this many episodes; 0 disables.
    pub checkpoint_every: usize,
    /// Write the per-step training log.
    pub step_log: bool,
    pub curriculum: CurriculumConfig,
    pub eval: EvalSettings,
    pub audit: AuditSettings,
    pub zyz: ZyzSettings,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            out: PathBuf::from("out"),
            checkpoint_every: 1_000,
            step_log: true,
            curriculum: CurriculumConfig::default(),
            eval: EvalSettings::default(),
            audit: AuditSettings::default(),
            zyz: ZyzSettings::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(format!("config: {e}")))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }
}

#[derive(Debug, Parser)]
#[command(name = "soma", version, about = "Robot-aware Soma cube assembly toolkit")]
pub struct Cli {
    /// TOML run configuration; flags override its values.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Leave wall-clock fields out of run.json so reruns are byte-identical.
    #[arg(long, global = true)]
    pub no_timestamps: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Enumerate exact solutions and robot-friendly placement orders.
    Solve(SolveArgs),
    /// Train the masked DQN through the curriculum.
    Train(TrainArgs),
    /// Greedy rollouts of a saved checkpoint.
    Eval(EvalArgs),
    /// Legal-action counts over random reachable states.
    MaskAudit(MaskAuditArgs),
    /// Singularity-guard benchmark over a set of target poses.
    ZyzSim(ZyzSimArgs),
    /// CSV exports from a training metrics stream.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    /// `all`, or a comma-separated list of piece names.
    #[arg(long, default_value = "all", conflicts_with = "level")]
    pub pieces: String,
    /// Solve a curriculum level's sub-puzzle instead of the full cube.
    #[arg(long)]
    pub level: Option<u8>,
    /// Write at most this many solutions.
    #[arg(long)]
    pub limit: Option<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum EpsilonArg {
    Exp,
    Linear,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum RewardArg {
    Shaped,
    Sparse,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ArchArg {
    Hierarchical,
    Flat,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Train this level only.
    #[arg(long)]
    pub level: Option<u8>,
    /// Episode budget per level.
    #[arg(long)]
    pub episodes: Option<usize>,
    #[arg(long, value_enum)]
    pub epsilon: Option<EpsilonArg>,
    #[arg(long, value_enum)]
    pub reward: Option<RewardArg>,
    #[arg(long, value_enum)]
    pub arch: Option<ArchArg>,
    /// Mask only bounds and collisions.
    #[arg(long)]
    pub unmasked: bool,
    #[arg(long)]
    pub train_every: Option<u64>,
    #[arg(long)]
    pub checkpoint_every: Option<usize>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub level: Option<u8>,
    #[arg(long)]
    pub episodes: Option<usize>,
}

#[derive(Debug, Args)]
pub struct MaskAuditArgs {
    #[arg(long)]
    pub samples: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ZyzSimArgs {
    /// JSON list of poses; defaults to the bundled near-singular suite.
    #[arg(long, value_name = "FILE")]
    pub targets: Option<PathBuf>,
    /// Run a single oracle instead of all of them.
    #[arg(long)]
    pub oracle: Option<String>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Metrics stream written by `train`; defaults to `<out>/metrics.jsonl`.
    #[arg(long, value_name = "FILE")]
    pub metrics: Option<PathBuf>,
}

/// Resolved global options.
#[derive(Clone, Debug)]
pub struct Context {
    pub config: RunConfig,
    pub timestamps: bool,
}

impl Context {
    pub fn out(&self) -> &Path {
        &self.config.out
    }
}

pub(crate) fn parse_level(v: u8) -> Result<Level, CliError> {
    Level::try_from(v).map_err(CliError::Config)
}

fn context(cli: &Cli) -> Result<Context, CliError> {
    let mut config = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(out) = &cli.out {
        config.out = out.clone();
    }
    Ok(Context {
        config,
        timestamps: !cli.no_timestamps,
    })
}

pub fn dispatch(cli: Cli) -> Result<(), CliError> {
    let mut ctx = context(&cli)?;
    match cli.command {
        Command::Solve(a) => cmd_solve(&mut ctx, &a),
        Command::Train(a) => cmd_train(&mut ctx, &a),
        Command::Eval(a) => cmd_eval(&mut ctx, &a),
        Command::MaskAudit(a) => cmd_mask_audit(&mut ctx, &a),
        Command::ZyzSim(a) => cmd_zyz_sim(&mut ctx, &a),
        Command::Report(a) => cmd_report(&mut ctx, &a),
    }
}

/// Parses `args` (including the program name) and runs the command. Returns
/// the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
