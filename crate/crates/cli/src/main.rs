//! `parzc` — collect node-wise zero-cost statistics, train the rank
//! predictor and analyse the results from the command line.
//!
//! Exit codes: 0 success, 1 I/O failure, 2 invalid input or usage,
//! 3 numeric fault during training or scoring.

mod commands;
mod config;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use parzc::netzoo::ProxyName;
use parzc::train::LossKind;

#[derive(Parser, Debug)]
#[command(name = "parzc", version, about = "Node-wise zero-cost proxies and rank prediction")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate the synthetic benchmark: DAGs, stats and hidden truth.
    Synth(SynthArgs),
    /// Collect node-wise statistics from DAG files.
    Collect(CollectArgs),
    /// Train a predictor on a labelled stats file.
    Train(TrainArgs),
    /// Evaluate a checkpoint against a labelled stats file.
    Eval(EvalArgs),
    /// Run the design and loss ablations over several seeds.
    Ablate(AblateArgs),
    /// Score a candidate pool and write the best architectures.
    Search(SearchArgs),
    /// Fit gradient-boosted trees and report per-node importance.
    Importance(ImportanceArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    Desk,
    PaperNb101,
    PaperNb201,
    PaperNds,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EvalSplit {
    Train,
    Validation,
    All,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AblationKind {
    Design,
    Loss,
    Both,
}

/// Options shared by every command.
#[derive(Args, Debug, Clone)]
pub struct Common {
    /// Output directory (created if missing).
    #[arg(long)]
    pub out: PathBuf,
    /// TOML config with optional [synth], [model], [train] and [gbdt] tables.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

/// Model and training options; flags override the config file.
#[derive(Args, Debug, Clone)]
pub struct TrainOpts {
    /// Model size preset.
    #[arg(long, value_enum, default_value_t = Preset::Desk)]
    pub preset: Preset,
    /// Loss terms joined by '+', or "all" [default: diffkendall].
    #[arg(long)]
    pub loss: Option<LossKind>,
    /// DiffKendall sharpness [default: 0.5].
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Training epochs [default: 60].
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Seed for the initial weights and the training stream [default: 0].
    #[arg(long)]
    pub seed: Option<u64>,
    /// Seed of the train/validation split.
    #[arg(long, default_value_t = 7)]
    pub split_seed: u64,
    /// Node positions per proxy block [default: largest node count].
    #[arg(long)]
    pub lmax: Option<usize>,
}

#[derive(Args, Debug)]
struct SynthArgs {
    #[command(flatten)]
    common: Common,
    /// Benchmark seed [default: 7].
    #[arg(long)]
    seed: Option<u64>,
    /// Number of architectures [default: 1000].
    #[arg(long)]
    n: Option<usize>,
}

#[derive(Args, Debug)]
struct CollectArgs {
    #[command(flatten)]
    common: Common,
    /// A DAG file, a JSON-lines file of DAGs, or a directory of them.
    #[arg(long)]
    dags: PathBuf,
    /// Comma-separated proxies.
    #[arg(long, value_delimiter = ',', default_value = "fisher,gradnorm,l2norm,plain,snip,synflow")]
    proxies: Vec<ProxyName>,
    /// Weight-initialisation and probe-batch seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Rows in the probe batch.
    #[arg(long, default_value_t = 16)]
    probe_batch: usize,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[command(flatten)]
    common: Common,
    /// Labelled stats file (JSON lines).
    #[arg(long)]
    stats: PathBuf,
    #[command(flatten)]
    opts: TrainOpts,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    stats: PathBuf,
    #[arg(long)]
    ckpt: PathBuf,
    /// Records to score; train/validation reproduce the training split.
    #[arg(long, value_enum, default_value_t = EvalSplit::Validation)]
    split: EvalSplit,
    /// Seed of the train/validation split [default: the checkpoint's].
    #[arg(long)]
    split_seed: Option<u64>,
    /// Average this many sampled forward passes (0 = posterior mean).
    #[arg(long, default_value_t = 0)]
    mc_samples: usize,
}

#[derive(Args, Debug)]
struct AblateArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    stats: PathBuf,
    #[command(flatten)]
    opts: TrainOpts,
    /// Which ablation table to run.
    #[arg(long, value_enum, default_value_t = AblationKind::Both)]
    which: AblationKind,
    /// Comma-separated seeds.
    #[arg(long, value_delimiter = ',', default_value = "0,1,2")]
    seeds: Vec<u64>,
}

#[derive(Args, Debug)]
struct SearchArgs {
    #[command(flatten)]
    common: Common,
    /// Candidate pool (JSON lines; labels optional).
    #[arg(long)]
    stats: PathBuf,
    #[arg(long)]
    ckpt: PathBuf,
    /// Number of architectures to report.
    #[arg(long, default_value_t = 10)]
    top_k: usize,
    /// Average this many sampled forward passes (0 = posterior mean).
    #[arg(long, default_value_t = 0)]
    mc_samples: usize,
}

#[derive(Args, Debug)]
struct ImportanceArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    stats: PathBuf,
    /// Node positions per proxy block [default: largest node count].
    #[arg(long)]
    lmax: Option<usize>,
    /// Fraction of records used to fit the trees.
    #[arg(long, default_value_t = 0.8)]
    train_fraction: f64,
    /// Seed of the fitting split [default: 42].
    #[arg(long)]
    seed: Option<u64>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let argv: Vec<String> = std::env::args().collect();
    let run = match cli.command {
        Command::Synth(a) => commands::synth(&a.common, a.seed, a.n, &argv),
        Command::Collect(a) => commands::collect(&a.common, &a.dags, &a.proxies, a.seed, a.probe_batch, &argv),
        Command::Train(a) => commands::train(&a.common, &a.stats, &a.opts, &argv),
        Command::Eval(a) => commands::eval(&a.common, &a.stats, &a.ckpt, a.split, a.split_seed, a.mc_samples, &argv),
        Command::Ablate(a) => commands::ablate(&a.common, &a.stats, &a.opts, a.which, &a.seeds, &argv),
        Command::Search(a) => commands::search(&a.common, &a.stats, &a.ckpt, a.top_k, a.mc_samples, &argv),
        Command::Importance(a) => {
            commands::importance(&a.common, &a.stats, a.lmax, a.train_fraction, a.seed, &argv)
        }
    };
    match run {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

/// Invalid input detected by the CLI itself (config values, flag
/// combinations, failed collection files); exits with 2.
#[derive(Debug)]
pub struct Usage(pub String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn exit_code(e: &anyhow::Error) -> u8 {
    for cause in e.chain() {
        if let Some(err) = cause.downcast_ref::<parzc::Error>() {
            return match err {
                parzc::Error::Io { .. } => 1,
                err if err.is_numeric() => 3,
                _ => 2,
            };
        }
        if cause.is::<Usage>() || cause.is::<toml::de::Error>() || cause.is::<serde_json::Error>() {
            return 2;
        }
    }
    1
}
