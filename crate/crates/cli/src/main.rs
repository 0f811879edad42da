//! `cloze`: build cloze datasets, train readers, run baselines and evaluate.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

/// Bad arguments or configuration (exit code 1).
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

/// A verification step ran and failed (exit code 3).
#[derive(Debug)]
pub struct VerificationFailure(pub String);

impl std::fmt::Display for VerificationFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for VerificationFailure {}

#[derive(Debug, Parser)]
#[command(name = "cloze", version, about = "Cloze-style last-word prediction toolkit")]
#[command(after_help = after_help())]
pub struct Cli {
    /// TOML configuration file; unknown keys are rejected.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Worker threads for parallel stages [default: all cores].
    #[arg(long, global = true)]
    pub jobs: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

fn after_help() -> String {
    format!(
        "Exit codes: 0 success, 1 usage error, 2 data error, 3 verification failure.\n\n\
         Configuration defaults (every key optional):\n\n{}\
         # punctuation = \"path\"  one token per line; bundled list when unset\n\
         # stopwords = \"path\"    one token per line; bundled list when unset\n",
        config::Config::defaults_toml()
    )
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Turn a directory of plain-text documents into instance files.
    BuildData(BuildDataArgs),
    /// Train a neural reader with dev-accuracy early stopping.
    Train(TrainArgs),
    /// Score a trained model on an instance or passage file.
    Evaluate(EvaluateArgs),
    /// Score a baseline on an instance or passage file.
    Baseline(BaselineArgs),
    /// Rank candidates for each passage with a trained model (JSON Lines).
    Predict(PredictArgs),
    /// Check reader gradients against finite differences.
    Gradcheck(GradcheckArgs),
    /// Tabulate evaluation reports from a directory.
    Compare(CompareArgs),
}

#[derive(Debug, Args)]
pub struct BuildDataArgs {
    /// Directory of UTF-8 text files, one document per file.
    #[arg(long)]
    pub corpus: PathBuf,
    /// Training instances (JSON Lines).
    #[arg(long)]
    pub out: PathBuf,
    /// Validation instances (JSON Lines).
    #[arg(long)]
    pub val_out: PathBuf,
    /// Share of instances kept for training [default: about 0.886].
    #[arg(long)]
    pub train_fraction: Option<f64>,
    /// Overrides the configured seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Keep each document's instances on one side of the split.
    #[arg(long)]
    pub by_document: bool,
    /// Also write a uniform sample of windows without the answer filter.
    #[arg(long, requires = "control_n")]
    pub control_out: Option<PathBuf>,
    /// Number of control windows to sample.
    #[arg(long, requires = "control_out")]
    pub control_n: Option<usize>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Reader architecture: stanford, stanford-mod, as or ga.
    #[arg(long, value_parser = parse_reader)]
    pub reader: cloze_core::readers::ReaderKind,
    /// Add the four position features to context embeddings.
    #[arg(long)]
    pub features: bool,
    /// Training instances (`.jsonl`).
    #[arg(long)]
    pub train: PathBuf,
    /// Development instances used for early stopping.
    #[arg(long)]
    pub dev: PathBuf,
    /// Directory for epoch checkpoints, the log and `model.ckpt`.
    #[arg(long)]
    pub out: PathBuf,
    /// Continue from an epoch checkpoint.
    #[arg(long)]
    pub resume: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Final `model.ckpt` written by `train`, or an LSTM baseline checkpoint.
    #[arg(long)]
    pub model: PathBuf,
    /// `.jsonl` instance file or passage file.
    #[arg(long)]
    pub data: PathBuf,
    /// Cutoffs reported as top-k accuracy run from 1 to this value.
    #[arg(long, default_value_t = 3)]
    pub topk: usize,
    /// Break accuracy down by annotated phenomenon.
    #[arg(long)]
    pub labels: bool,
}

#[derive(Debug, Args)]
pub struct BaselineArgs {
    /// random, first, last, mostfreq, ngram, ngram-cache or lstm.
    #[arg(long, value_parser = parse_baseline)]
    pub kind: cloze_core::baselines::BaselineKind,
    /// `.jsonl` instance file or passage file.
    #[arg(long)]
    pub data: PathBuf,
    /// Language-model training text: a document directory or `.jsonl` file.
    #[arg(long)]
    pub train_corpus: Option<PathBuf>,
    /// Reuse a trained LSTM language model instead of training one.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Keep LSTM training artifacts here.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Cache interpolation weight (overrides the configured value).
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Cutoffs reported as top-k accuracy run from 1 to this value.
    #[arg(long, default_value_t = 3)]
    pub topk: usize,
    /// Break accuracy down by annotated phenomenon.
    #[arg(long)]
    pub labels: bool,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    /// Model checkpoint to rank with.
    #[arg(long)]
    pub model: PathBuf,
    /// A single passage given inline.
    #[arg(long, conflicts_with = "input")]
    pub passage: Option<String>,
    /// File of passages or JSON instances, one per line; `-` reads stdin.
    #[arg(long, required_unless_present = "passage")]
    pub input: Option<PathBuf>,
    /// Candidates listed per passage.
    #[arg(long, default_value_t = 3)]
    pub topk: usize,
    /// Exit with a data error if any line fails.
    #[arg(long)]
    pub strict: bool,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    /// Check one reader only [default: all four].
    #[arg(long, value_parser = parse_reader)]
    pub reader: Option<cloze_core::readers::ReaderKind>,
    /// Feature settings to check.
    #[arg(long, value_enum, default_value_t = FeatureChoice::Both)]
    pub features: FeatureChoice,
    /// Seed for the toy instance and the initial parameters.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Largest allowed relative error.
    #[arg(long, default_value_t = 1e-4)]
    pub tolerance: f64,
    /// Deliberately perturb one analytic gradient (negative control).
    #[arg(long)]
    pub corrupt: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum FeatureChoice {
    Off,
    On,
    Both,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    /// Directory of `.json` reports written by `evaluate` or `baseline`.
    #[arg(long)]
    pub reports: PathBuf,
    /// Emit the rows as JSON instead of a text table.
    #[arg(long)]
    pub json: bool,
}

fn parse_reader(s: &str) -> Result<cloze_core::readers::ReaderKind, String> {
    s.parse().map_err(|e: cloze_core::Error| e.to_string())
}

fn parse_baseline(s: &str) -> Result<cloze_core::baselines::BaselineKind, String> {
    s.parse().map_err(|e: cloze_core::Error| e.to_string())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<UsageError>() {
            return 1;
        }
        if cause.is::<VerificationFailure>() {
            return 3;
        }
        if let Some(e) = cause.downcast_ref::<cloze_core::Error>() {
            return if matches!(e, cloze_core::Error::Config(_)) {
                1
            } else {
                2
            };
        }
    }
    2
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .target(env_logger::Target::Stderr)
        .init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
