//! `offtl`: command-line front end for the transfer-learning toolkit.
//!
//! Exit codes: 0 on success, 1 on usage or configuration errors, 2 on data
//! errors and failed checks.

mod commands;
mod fixtures;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(
    name = "offtl",
    version,
    about = "BiLSTM-CNN offensive-language classifier with transfer learning"
)]
#[command(arg_required_else_help = true)]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Global {
    /// Config file of `key = value` lines; `#` starts a comment.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Override one config key after the file; repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    /// Log progress to stderr.
    #[arg(short, long, global = true)]
    pub verbose: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Normalize, tokenize, deduplicate and split corpora.
    Prepare(PrepareArgs),
    /// Train a topic model over the meaningful tokens of a raw corpus.
    LdaTrain(LdaTrainArgs),
    /// Cluster user handles by LDA over mention lists.
    ClusterUsers(ClusterArgs),
    /// Train a network on a pre-training task.
    Pretrain(PretrainArgs),
    /// Fine-tune a network on labeled tweets under a freeze strategy.
    Finetune(FinetuneArgs),
    /// Score checkpoints on labeled tweets.
    Evaluate(EvaluateArgs),
    /// Train and score the linear baseline.
    Baseline(BaselineArgs),
    /// Compare analytic and finite-difference gradients.
    Gradcheck(GradcheckArgs),
    /// Write the synthetic fixture corpora.
    MakeFixtures(FixtureArgs),
}

#[derive(Debug, Args)]
pub struct PrepareArgs {
    /// Raw JSONL corpus with `id` and `text` fields.
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Drop tweets whose normalized text was seen before.
    #[arg(long)]
    pub dedup: bool,
    /// Write the (deduplicated) raw corpus here.
    #[arg(long)]
    pub corpus_out: Option<PathBuf>,
    /// Write mention lists here, one space-separated list per line.
    #[arg(long)]
    pub mentions_out: Option<PathBuf>,
    /// Labeled TSV (`text<TAB>coarse<TAB>fine`) to split.
    #[arg(long)]
    pub labeled: Option<PathBuf>,
    /// Validation size taken from the end of the labeled file [config: validation_tail].
    #[arg(long)]
    pub tail: Option<usize>,
    #[arg(long)]
    pub train_out: Option<PathBuf>,
    #[arg(long)]
    pub valid_out: Option<PathBuf>,
    /// Tokenized output, one tweet per line with space-joined tokens.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct LdaTrainArgs {
    /// Raw JSONL corpus.
    #[arg(long)]
    pub corpus: PathBuf,
    /// Topic count [config: k_topics].
    #[arg(long)]
    pub k: Option<usize>,
    /// Gibbs sweeps [config: lda_iterations].
    #[arg(long)]
    pub iters: Option<usize>,
    /// [config: seed]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Stopword file, one word per line; defaults to the bundled German list.
    #[arg(long)]
    pub stopwords: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ClusterArgs {
    /// Mention lists, one space-separated list per line.
    #[arg(long)]
    pub mentions: PathBuf,
    /// Cluster count [config: k_users].
    #[arg(long)]
    pub k: Option<usize>,
    /// Gibbs sweeps [config: lda_iterations].
    #[arg(long)]
    pub iters: Option<usize>,
    /// [config: seed]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output TSV `user<TAB>cluster`.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TaskArg {
    Category,
    Emoji,
    Topic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TargetArg {
    Coarse,
    Fine,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StrategyArg {
    None,
    Gu,
    Bu,
    Tu,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MetricArg {
    Binary,
    Macro,
}

#[derive(Debug, Args)]
pub struct PretrainArgs {
    #[arg(long, value_enum)]
    pub task: TaskArg,
    /// Comment JSONL for `category`, raw tweet JSONL otherwise.
    #[arg(long)]
    pub corpus: PathBuf,
    /// Topic model, required for `topic`.
    #[arg(long)]
    pub lda: Option<PathBuf>,
    /// Word vectors in text format.
    #[arg(long)]
    pub vectors: PathBuf,
    /// User clusters; adds the cluster multi-hot input.
    #[arg(long)]
    pub clusters: Option<PathBuf>,
    /// [config: pretrain_epochs]
    #[arg(long)]
    pub epochs: Option<usize>,
    /// [config: pretrain_batch]
    #[arg(long)]
    pub batch: Option<usize>,
    /// [config: seed]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Stopword file for the topic filter.
    #[arg(long)]
    pub stopwords: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct FinetuneArgs {
    /// Pre-trained checkpoint, or `none` for a fresh network.
    #[arg(long)]
    pub ckpt: String,
    #[arg(long, value_enum)]
    pub strategy: StrategyArg,
    #[arg(long, value_enum)]
    pub task: TargetArg,
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long)]
    pub valid: PathBuf,
    #[arg(long)]
    pub vectors: PathBuf,
    #[arg(long)]
    pub clusters: Option<PathBuf>,
    /// Model-selection metric; binary F1 for coarse and macro F1 for fine by default.
    #[arg(long, value_enum)]
    pub metric: Option<MetricArg>,
    /// Epoch budget per phase [config: finetune_epochs].
    #[arg(long)]
    pub epochs: Option<usize>,
    /// [config: finetune_batch]
    #[arg(long)]
    pub batch: Option<usize>,
    /// [config: seed]
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
    /// JSON summary of every phase: history, selected epoch, layer checksums.
    #[arg(long)]
    pub summary: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Checkpoint; repeatable. A `{run}` placeholder expands to 1..=runs.
    #[arg(long, required = true)]
    pub ckpt: Vec<String>,
    /// Run count for `{run}` expansion [config: runs].
    #[arg(long)]
    pub runs: Option<usize>,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum)]
    pub task: TargetArg,
    #[arg(long)]
    pub vectors: PathBuf,
    #[arg(long)]
    pub clusters: Option<PathBuf>,
    /// Report file; printed to stdout when absent.
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// TSV of false positives and negatives of the first checkpoint (coarse only).
    #[arg(long)]
    pub errors: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BaselineArgs {
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long)]
    pub valid: PathBuf,
    #[arg(long)]
    pub vectors: PathBuf,
    #[arg(long, value_enum)]
    pub task: TargetArg,
    /// Highest-weighted terms listed per class.
    #[arg(long, default_value_t = 10)]
    pub top_terms: usize,
    /// [config: seed]
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    #[arg(long, default_value_t = 3)]
    pub seed: u64,
    /// Random batches to check.
    #[arg(long, default_value_t = 5)]
    pub batches: usize,
    /// Samples per batch.
    #[arg(long, default_value_t = 2)]
    pub samples: usize,
    /// Central-difference step.
    #[arg(long, default_value_t = 1e-5)]
    pub eps: f64,
    /// Largest accepted relative error.
    #[arg(long, default_value_t = 1e-4)]
    pub tol: f64,
}

#[derive(Debug, Args)]
pub struct FixtureArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Width of the generated word vectors.
    #[arg(long, default_value_t = 50)]
    pub dim: usize,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    let level = if cli.global.verbose { "info" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
