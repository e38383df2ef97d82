mod config;
mod eval;
mod manifest;
mod prepare;
mod query;
mod train;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use lacuna_core::masking::{MaskDistribution, Remask};
use lacuna_core::model::Activation;

pub const EXIT_INPUT: u8 = 2;
pub const EXIT_TRAINING: u8 = 3;
pub const EXIT_QUERY: u8 = 4;

/// An error together with the process exit code it maps to.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub error: anyhow::Error,
}

impl Failure {
    pub fn input(error: impl Into<anyhow::Error>) -> Self {
        Failure {
            code: EXIT_INPUT,
            error: error.into(),
        }
    }

    pub fn training(error: impl Into<anyhow::Error>) -> Self {
        Failure {
            code: EXIT_TRAINING,
            error: error.into(),
        }
    }

    pub fn query(error: impl Into<anyhow::Error>) -> Self {
        Failure {
            code: EXIT_QUERY,
            error: error.into(),
        }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(error: anyhow::Error) -> Self {
        Failure { code: 1, error }
    }
}

impl From<std::io::Error> for Failure {
    fn from(error: std::io::Error) -> Self {
        Failure {
            code: 1,
            error: error.into(),
        }
    }
}

pub type CmdResult = Result<(), Failure>;

/// Train and query character-level models that fill lacunae in manuscript text.
#[derive(Debug, Parser)]
#[command(name = "lacuna", version, args_override_self = true)]
struct Cli {
    /// File of `key=value` lines supplying any flag; flags on the command line win.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Parse a corpus, split it, and write vocabulary, splits and test sets.
    Prepare(PrepareArgs),
    /// Train a masked language model on a prepared data directory.
    Train(TrainArgs),
    /// Score checkpoints or baselines on masked test sets.
    Eval(EvalArgs),
    /// Fill the blank lacunae of a line and show the top alternatives.
    Predict(PredictArgs),
    /// Rank same-length candidates for the single blank lacuna of a line.
    Rank(RankArgs),
    /// Serve checkpoints over HTTP.
    Serve(ServeArgs),
    /// Write a deterministic synthetic corpus for demos and smoke runs.
    Synth(SynthArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct PrepareArgs {
    /// Directory of `.txt` corpus files, one sentence per line.
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum MaskArg {
    Random,
    Smart,
}

impl From<MaskArg> for MaskDistribution {
    fn from(m: MaskArg) -> Self {
        match m {
            MaskArg::Random => MaskDistribution::Random,
            MaskArg::Smart => MaskDistribution::Smart,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum RemaskArg {
    Once,
    Dynamic,
}

impl From<RemaskArg> for Remask {
    fn from(r: RemaskArg) -> Self {
        match r {
            RemaskArg::Once => Remask::Once,
            RemaskArg::Dynamic => Remask::Dynamic,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ActivationArg {
    Identity,
    Tanh,
}

impl From<ActivationArg> for Activation {
    fn from(a: ActivationArg) -> Self {
        match a {
            ActivationArg::Identity => Activation::Identity,
            ActivationArg::Tanh => Activation::Tanh,
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct TrainArgs {
    /// Output directory of `lacuna prepare`.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum)]
    pub mask: MaskArg,
    #[arg(long, value_enum)]
    pub remask: RemaskArg,
    /// Checkpoint path; the training log and run manifest are written beside it.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 50)]
    pub max_epochs: u32,
    #[arg(long, default_value_t = 5)]
    pub patience: u32,
    #[arg(long, default_value_t = 32)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 4096)]
    pub max_batch_tokens: usize,
    #[arg(long, default_value_t = 3e-4)]
    pub learning_rate: f64,
    #[arg(long, default_value_t = 0.01)]
    pub weight_decay: f64,
    #[arg(long, default_value_t = 5.0)]
    pub grad_clip: f64,
    /// Truncate longer sentences to this many characters.
    #[arg(long)]
    pub max_length: Option<usize>,
    /// Use only the first N training sentences.
    #[arg(long)]
    pub limit_train: Option<usize>,
    #[arg(long, default_value_t = 200)]
    pub embedding_dim: usize,
    #[arg(long, default_value_t = 300)]
    pub hidden_dim: usize,
    #[arg(long, default_value_t = 150)]
    pub projection_dim: usize,
    #[arg(long, default_value_t = 4)]
    pub layers: usize,
    #[arg(long, value_enum, default_value_t = ActivationArg::Identity)]
    pub projection_activation: ActivationArg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum BaselineArg {
    Random,
    Mode,
    Trigram,
}

#[derive(Debug, Args, Serialize)]
pub struct EvalArgs {
    /// Checkpoint to evaluate; repeatable.
    #[arg(long)]
    pub ckpt: Vec<PathBuf>,
    /// Baseline to evaluate; repeatable.
    #[arg(long, value_enum)]
    pub baseline: Vec<BaselineArg>,
    /// Masked test set file; repeatable.
    #[arg(long, required = true)]
    pub test_set: Vec<PathBuf>,
    /// Prepared data directory; baselines are fit on its training split.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// JSON report path.
    #[arg(long)]
    pub report: PathBuf,
    /// Seed of the random baseline.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Add-k constant of the trigram baseline.
    #[arg(long, default_value_t = lacuna_core::baselines::DEFAULT_K)]
    pub trigram_k: f64,
    /// Also write the trigram counts here.
    #[arg(long)]
    pub trigram_dump: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct PredictArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    /// A line in corpus markup, e.g. `ⲁⲩⲱ [...] ⲡⲛⲟⲩⲧⲉ`.
    #[arg(long)]
    pub text: String,
    #[arg(long, default_value_t = lacuna_service::DEFAULT_TOP_K)]
    pub top_k: usize,
    /// Print JSON instead of a table.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args, Serialize)]
pub struct RankArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    #[arg(long)]
    pub text: String,
    /// Comma-separated candidates.
    #[arg(
        long,
        value_delimiter = ',',
        required_unless_present = "candidates_file"
    )]
    pub candidates: Vec<String>,
    /// File with one candidate per line.
    #[arg(long)]
    pub candidates_file: Option<PathBuf>,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args, Serialize)]
pub struct ServeArgs {
    /// Checkpoint to serve, as `PATH` or `ID=PATH`; repeatable.
    #[arg(long)]
    pub ckpt: Vec<String>,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    /// Allowed CORS origin; repeatable. Any origin when absent.
    #[arg(long)]
    pub cors_origin: Vec<String>,
}

#[derive(Debug, Args, Serialize)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Sentences without lacunae.
    #[arg(long, default_value_t = 2000)]
    pub complete: usize,
    /// Sentences whose lacunae are all reconstructed.
    #[arg(long, default_value_t = 100)]
    pub reconstructed: usize,
    /// Sentences with blank lacunae.
    #[arg(long, default_value_t = 100)]
    pub blank: usize,
}

fn synth(a: &SynthArgs) -> CmdResult {
    let corpus = lacuna_core::synth::synth_corpus(a.seed, a.complete, a.reconstructed, a.blank);
    lacuna_core::synth::write_corpus_dir(&a.out, &corpus)?;
    Ok(())
}

fn run(cli: Cli) -> CmdResult {
    match cli.command {
        Command::Prepare(a) => prepare::run(&a),
        Command::Train(a) => train::run(&a),
        Command::Eval(a) => eval::run(&a),
        Command::Predict(a) => query::predict(&a),
        Command::Rank(a) => query::rank(&a),
        Command::Serve(a) => query::serve(&a),
        Command::Synth(a) => synth(&a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let args = match config::expand_args(std::env::args_os().collect()) {
        Ok(args) => args,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(EXIT_INPUT);
        }
    };
    let cli = Cli::parse_from(args);
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}
