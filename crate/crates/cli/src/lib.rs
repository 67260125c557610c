//! `uwoc`: sweeps, dataset generation, training, SwitchOpt and report
//! emission, driven by one JSON run configuration.

pub mod commands;
pub mod config;
pub mod error;
pub mod report;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use config::RunConfig;
pub use error::{CliError, Result};
use uwoc_core::dataset::Task;
use uwoc_ml::rnn::RnnKind;
use uwoc_ml::ClassifierKind;

#[derive(Debug, Parser)]
#[command(name = "uwoc", version, about = "Underwater optical OFDM link simulation and configuration learning")]
pub struct Cli {
    /// JSON run configuration; built-in defaults when omitted.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,

    /// Master seed. Takes precedence over UWOC_SEED and the config file.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Monte Carlo FER/throughput sweep with a coverage summary.
    Sweep(SweepArgs),
    /// Generate the labelled configuration-learning dataset.
    Dataset(DatasetArgs),
    /// Cross-validate one classifier on one task.
    Train(TrainArgs),
    /// Alternating search over hidden units and epochs for the recurrent kinds.
    Switchopt(SwitchOptArgs),
    /// Merge sweep, metrics and SwitchOpt outputs into plot-ready CSV.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct SimArgs {
    /// Frames per point.
    #[arg(long)]
    pub frames: Option<usize>,
    /// Maximum concurrent point simulations.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub parallelism: Option<u64>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// Sweep CSV destination.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Coverage summary JSON destination.
    #[arg(long)]
    pub summary: Option<PathBuf>,
    #[command(flatten)]
    pub sim: SimArgs,
    /// Speeds in m/s, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub speeds: Option<Vec<f64>>,
    /// Distances in m, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub distances: Option<Vec<f64>>,
    /// Configuration indices 1..=6, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub configs: Option<Vec<usize>>,
    #[arg(long)]
    pub repeats: Option<usize>,
}

#[derive(Debug, Args)]
pub struct DatasetArgs {
    /// Dataset CSV destination.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write the underlying sweep rows here.
    #[arg(long)]
    pub sweep_out: Option<PathBuf>,
    #[command(flatten)]
    pub sim: SimArgs,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// One of b1, b2, b3, c3, c6.
    #[arg(long, value_parser = parse_task)]
    pub task: Task,
    /// One of lstm, bilstm, gru, tree, adaboost, svm.
    #[arg(long, value_parser = parse_classifier)]
    pub classifier: ClassifierKind,
    /// Hidden units of a recurrent classifier.
    #[arg(long)]
    pub hidden: Option<usize>,
    /// Training epochs of a recurrent classifier.
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub folds: Option<usize>,
    /// Metrics JSON destination.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SwitchOptArgs {
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    #[arg(long, value_parser = parse_task)]
    pub task: Option<Task>,
    /// Recurrent candidates, comma separated.
    #[arg(long, value_delimiter = ',', value_parser = parse_rnn)]
    pub candidates: Option<Vec<RnnKind>>,
    #[arg(long, value_delimiter = ',')]
    pub grid_nh: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    pub grid_np: Option<Vec<usize>>,
    /// Initial epoch count; must be on the epoch grid.
    #[arg(long)]
    pub beta: Option<usize>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub max_alternations: Option<usize>,
    #[arg(long)]
    pub folds: Option<usize>,
    /// Result JSON destination.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Sweep CSV inputs.
    #[arg(long = "sweep", value_name = "CSV")]
    pub sweeps: Vec<PathBuf>,
    /// `train` metrics JSON inputs.
    #[arg(long = "metrics", value_name = "JSON")]
    pub metrics: Vec<PathBuf>,
    /// `switchopt` result JSON inputs.
    #[arg(long = "switchopt", value_name = "JSON")]
    pub switchopts: Vec<PathBuf>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// Families to write, comma separated; all with inputs when omitted.
    #[arg(long, value_delimiter = ',', value_enum)]
    pub emit: Option<Vec<report::Family>>,
}

fn parse_task(s: &str) -> std::result::Result<Task, String> {
    s.parse().map_err(|e: uwoc_core::Error| e.to_string())
}

fn parse_classifier(s: &str) -> std::result::Result<ClassifierKind, String> {
    s.parse().map_err(|e: uwoc_ml::Error| e.to_string())
}

fn parse_rnn(s: &str) -> std::result::Result<RnnKind, String> {
    s.parse().map_err(|e: uwoc_ml::Error| e.to_string())
}

/// Loads the configuration, settles the seed and dispatches. `env_seed` is
/// the raw value of `UWOC_SEED`, if set.
pub fn run(cli: Cli, env_seed: Option<&str>) -> Result<()> {
    let mut cfg = RunConfig::load(cli.config.as_deref())?;
    cfg.resolve_seed(env_seed, cli.seed)?;
    match cli.command {
        Command::Sweep(a) => commands::sweep(&cfg, a),
        Command::Dataset(a) => commands::dataset(&cfg, a),
        Command::Train(a) => commands::train(&cfg, a),
        Command::Switchopt(a) => commands::switchopt(&cfg, a),
        Command::Report(a) => report::run(&cfg, a),
    }
}
