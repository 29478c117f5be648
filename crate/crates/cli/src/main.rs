//! `lpreform`: generate datasets, solve, train, reformulate, evaluate and
//! enumerate cluster orders from one binary.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use lpreform_core::nn::Pool;
use lpreform_core::reformulate::SplitMethod;
use lpreform_core::simplex::Metric;
use lpreform_core::training::{Profile, RewardMode};

#[derive(Debug, Parser)]
#[command(name = "lpreform", version, about = "Learned column reordering for linear programs")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct GlobalArgs {
    /// TOML file with [datagen], [solver], [training], [reformulate] and
    /// [evaluate] sections.
    #[arg(long, global = true, env = "LPREFORM_CONFIG")]
    pub config: Option<PathBuf>,
    #[arg(long, global = true, env = "LPREFORM_SEED")]
    pub seed: Option<u64>,
    #[arg(long, global = true, env = "LPREFORM_OUT_DIR", default_value = "out")]
    pub out_dir: PathBuf,
    /// Worker threads for solver calls.
    #[arg(long, global = true, env = "LPREFORM_JOBS")]
    pub jobs: Option<usize>,
    #[arg(long, global = true, env = "LPREFORM_PROFILE", value_enum, default_value = "desk")]
    pub profile: ProfileArg,
    #[arg(long = "k-shots", global = true, env = "LPREFORM_K_SHOTS")]
    pub k_shots: Option<usize>,
    #[arg(long, global = true, env = "LPREFORM_CLUSTERS")]
    pub clusters: Option<usize>,
    #[arg(long, global = true, env = "LPREFORM_POOL", value_enum)]
    pub pool: Option<PoolArg>,
    #[arg(long = "split-method", global = true, env = "LPREFORM_SPLIT_METHOD", value_enum)]
    pub split_method: Option<SplitArg>,
    #[arg(long, global = true, env = "LPREFORM_METRIC", value_enum)]
    pub metric: Option<MetricArg>,
    /// Increase log verbosity (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a scenario dataset with train/val/test split tags.
    Generate(GenerateArgs),
    /// Solve one MPS file and print the solve metrics as JSON.
    Solve(SolveArgs),
    /// Train the reordering policy on a dataset.
    Train(TrainArgs),
    /// Reorder one instance with a trained policy (best of k shots).
    Reformulate(ReformulateArgs),
    /// Compare original and reformulated solves over a dataset split.
    Evaluate(EvaluateArgs),
    /// Solve every cluster order of one instance.
    Oracle(OracleArgs),
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long, value_enum, default_value = "item-placement")]
    pub scenario: ScenarioArg,
    #[arg(long)]
    pub count: Option<usize>,
    #[arg(long)]
    pub items: Option<usize>,
    #[arg(long)]
    pub bins: Option<usize>,
    #[arg(long)]
    pub dims: Option<usize>,
    #[arg(long)]
    pub streams: Option<usize>,
    #[arg(long)]
    pub workers: Option<usize>,
    #[arg(long)]
    pub products: Option<usize>,
    #[arg(long)]
    pub periods: Option<usize>,
    /// Train, validation and test fractions.
    #[arg(long, value_delimiter = ',')]
    pub fractions: Option<Vec<f64>>,
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    pub mps: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Dataset manifest written by `generate`.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long = "batch-size")]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long = "reward-mode", value_enum)]
    pub reward_mode: Option<RewardArg>,
    /// Continue from a training checkpoint.
    #[arg(long)]
    pub resume: Option<PathBuf>,
    /// Fill the wall_time column of the metrics log.
    #[arg(long = "wall-time")]
    pub wall_time: bool,
}

#[derive(Debug, Args)]
pub struct ReformulateArgs {
    pub mps: PathBuf,
    /// Training checkpoint; an untrained policy seeded by --seed otherwise.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Also write sparsity images of the original and reordered matrices.
    #[arg(long)]
    pub images: bool,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum, default_value = "test")]
    pub split: SplitTagArg,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Where candidate orders come from.
    #[arg(long, value_enum, default_value = "policy")]
    pub proposer: ProposerArg,
    /// Write measured solve times (makes the output machine-dependent).
    #[arg(long = "record-time")]
    pub record_time: bool,
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    pub mps: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ProfileArg {
    Desk,
    Paper,
}

impl From<ProfileArg> for Profile {
    fn from(p: ProfileArg) -> Self {
        match p {
            ProfileArg::Desk => Profile::Desk,
            ProfileArg::Paper => Profile::Paper,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum PoolArg {
    Mean,
    Max,
    Min,
}

impl From<PoolArg> for Pool {
    fn from(p: PoolArg) -> Self {
        match p {
            PoolArg::Mean => Pool::Mean,
            PoolArg::Max => Pool::Max,
            PoolArg::Min => Pool::Min,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SplitArg {
    ContiguousBlocks,
    RoundRobin,
    ByNamePrefix,
}

impl From<SplitArg> for SplitMethod {
    fn from(s: SplitArg) -> Self {
        match s {
            SplitArg::ContiguousBlocks => SplitMethod::ContiguousBlocks,
            SplitArg::RoundRobin => SplitMethod::RoundRobin,
            SplitArg::ByNamePrefix => SplitMethod::ByNamePrefix,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum MetricArg {
    Iterations,
    SolveTime,
}

impl From<MetricArg> for Metric {
    fn from(m: MetricArg) -> Self {
        match m {
            MetricArg::Iterations => Metric::Iterations,
            MetricArg::SolveTime => Metric::SolveTime,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum RewardArg {
    Raw,
    Relative,
}

impl From<RewardArg> for RewardMode {
    fn from(r: RewardArg) -> Self {
        match r {
            RewardArg::Raw => RewardMode::Raw,
            RewardArg::Relative => RewardMode::Relative,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ScenarioArg {
    ItemPlacement,
    Apportionment,
    PlanningChain,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SplitTagArg {
    Train,
    Val,
    Test,
    All,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ProposerArg {
    Policy,
    Uniform,
    Identity,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.global.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let kind = e
                .downcast_ref::<lpreform_core::Error>()
                .map(commands::error_kind)
                .unwrap_or("Error");
            let chain: Vec<String> = e.chain().map(|c| c.to_string()).collect();
            let json = serde_json::json!({
                "error": chain.join(": "),
                "kind": kind,
            });
            eprintln!("{json}");
            ExitCode::FAILURE
        }
    }
}
