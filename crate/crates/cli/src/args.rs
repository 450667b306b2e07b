use std::net::SocketAddr;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use graphex::{Alignment, ScoreOrientation};

#[derive(Debug, Parser)]
#[command(name = "graphex", version, about = "Keyphrase recommendation over per-category token graphs")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build a model file from a keyphrase TSV.
    Train(TrainArgs),
    /// Recommend keyphrases for a TSV of items, writing JSONL.
    Infer(InferArgs),
    /// Judge and compare prediction files.
    Eval(EvalArgs),
    /// Serve recommendations over HTTP.
    Serve(ServeArgs),
    /// Print per-leaf graph statistics of a model.
    Stats(StatsArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OrientationArg {
    Count,
    Rank,
}

impl From<OrientationArg> for ScoreOrientation {
    fn from(o: OrientationArg) -> Self {
        match o {
            OrientationArg::Count => ScoreOrientation::COUNT,
            OrientationArg::Rank => ScoreOrientation::RANK,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AlignArg {
    Lta,
    Wmr,
    Jac,
}

impl From<AlignArg> for Alignment {
    fn from(a: AlignArg) -> Self {
        match a {
            AlignArg::Lta => Alignment::Lta,
            AlignArg::Wmr => Alignment::Wmr,
            AlignArg::Jac => Alignment::Jac,
        }
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// TSV of keyphrase, leaf_category, search_score, recall_score.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
    #[arg(long, default_value_t = 0.0)]
    pub min_search_count: f64,
    #[arg(long, value_enum, default_value_t = OrientationArg::Count)]
    pub score_orientation: OrientationArg,
    #[arg(long, default_value = "default")]
    pub meta_category: String,
    /// Fail instead of skipping malformed rows.
    #[arg(long)]
    pub strict: bool,
}

#[derive(Debug, Args)]
pub struct InferArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// TSV of item_id, title, leaf_category.
    #[arg(long)]
    pub items: PathBuf,
    /// JSONL output; `-` for stdout.
    #[arg(long, default_value = "-")]
    pub output: PathBuf,
    #[arg(long, default_value_t = graphex::inference::DEFAULT_K)]
    pub k: usize,
    #[arg(long, value_enum, default_value_t = AlignArg::Lta)]
    pub align: AlignArg,
    #[arg(long, default_value_t = 1)]
    pub threads: usize,
    /// Hard cap on emitted predictions; 0 disables the cap.
    #[arg(long, default_value_t = graphex::inference::DEFAULT_MAX_PREDICTIONS)]
    pub max_predictions: usize,
    #[arg(long, default_value_t = 1)]
    pub min_common_tokens: u32,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// `name=predictions.jsonl`, repeatable.
    #[arg(long, required = true, num_args = 1..)]
    pub runs: Vec<String>,
    /// `fixture:<tsv>`, `heuristic` or `http:<url>`.
    #[arg(long)]
    pub oracle: String,
    #[arg(long)]
    pub baseline: String,
    #[arg(long)]
    pub report: PathBuf,
    #[arg(long, default_value_t = 90.0)]
    pub head_percentile: f64,
    /// Items TSV supplying titles to the oracle.
    #[arg(long)]
    pub items: Option<PathBuf>,
    /// Curated keyphrase TSV defining the head threshold population.
    #[arg(long)]
    pub universe: Option<PathBuf>,
    #[arg(long, default_value_t = 4)]
    pub max_in_flight: usize,
    #[arg(long, default_value_t = 30_000)]
    pub oracle_timeout_ms: u64,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub bind: SocketAddr,
    #[arg(long, default_value_t = 64 * 1024)]
    pub max_body_bytes: usize,
    #[arg(long, default_value_t = graphex::inference::DEFAULT_K)]
    pub k: usize,
    #[arg(long, value_enum, default_value_t = AlignArg::Lta)]
    pub align: AlignArg,
    #[arg(long, default_value_t = graphex::inference::DEFAULT_MAX_PREDICTIONS)]
    pub max_predictions: usize,
    #[arg(long, default_value_t = 1000)]
    pub timeout_ms: u64,
    /// Answer unknown leaf categories with 200 and an empty list instead of 404.
    #[arg(long)]
    pub unknown_leaf_empty: bool,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    #[arg(long)]
    pub model: PathBuf,
}
