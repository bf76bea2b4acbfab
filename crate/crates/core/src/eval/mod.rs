//! Task-decomposition metrics (position-penalized edit distance, ROUGE),
//! the hierarchical success-rate rubric, and the report harness.

mod harness;
mod matching;
mod rouge;
mod score;
mod similarity;

pub use harness::{run_eval, score_sample, EvalConfig, EvalReport, SampleMetrics, TraceSmoothness, REPORT_DIR};
pub use matching::{
    build_match_set, edit_distance, edit_distance_from, edit_distance_with, match_steps, match_steps_with, min_cost_assignment,
    positional_penalty, weighted_matrix, MatchParams, MatchSet, MatchedPair, StepSequence,
};
pub use rouge::{lcs_len, rouge_l, rouge_n, Prf};
pub use score::{success_rate, summarize, wilson_interval, ScoreCard, SrSummary, Z_68};
pub use similarity::{token_cosine, StepSimilarity, TokenCosine};

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("step sequence is empty")]
    EmptySequence,
    #[error("step {0} is empty")]
    EmptyStep(usize),
    #[error("sigma must be positive and finite, got {0}")]
    InvalidSigma(f64),
    #[error("theta_match must lie in [0, 1], got {0}")]
    InvalidTheta(f64),
    #[error("index ({i}, {j}) out of range for lengths ({m}, {n})")]
    IndexOutOfRange { i: usize, j: usize, m: usize, n: usize },
    #[error("ROUGE-{0} is not supported (n must be 1 or 2)")]
    UnsupportedNgram(usize),
    #[error("invalid score card: {0}")]
    InvalidScoreCard(String),
    #[error("io error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("malformed input {path}: {message}")]
    Malformed { path: String, message: String },
}
