//! Offline evaluation of keyphrase recommendations.
//!
//! Predictions from any number of systems are judged for relevance by a
//! [`RelevanceOracle`], classified as head or tail against a search-count
//! percentile, and compared with proportion metrics (RP, HP), cross-model
//! ratios (RRR, RHR) and exclusive diversity.

mod judge;
mod metrics;
mod oracle;
mod run;

pub use judge::{Judge, JudgeFailure, JudgeOutcome, Judgment, JudgmentSet};
pub use metrics::{
    compute_metrics, exclusive_diversity, head_threshold, DiversityReport, HeadThreshold, MetricsReport,
    ModelDiversity, ModelMetrics, PairRatio,
};
pub use oracle::{
    parse_yes_no, render_prompt, FixtureOracle, HeuristicOracle, HttpOracle, OracleError, RelevanceOracle,
    PROMPT_TEMPLATE,
};
pub use run::{ModelRun, RunPrediction};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("baseline model {0:?} not among the runs")]
    BaselineMissing(String),

    #[error("no judgment for item {item_id:?}, keyphrase {keyphrase:?}")]
    MissingJudgment { item_id: String, keyphrase: String },

    #[error("head threshold needs at least one keyphrase")]
    EmptyUniverse,

    #[error("percentile must be in (0, 100], got {0}")]
    InvalidPercentile(f64),

    #[error("exclusive diversity needs at least two runs, got {0}")]
    TooFewRuns(usize),

    #[error("{path}: line {line}: {message}")]
    Parse { path: String, line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
