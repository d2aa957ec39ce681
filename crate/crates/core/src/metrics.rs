//! Patient-level AUROC, lesion-level average precision, and case-level
//! bootstrap confidence intervals.

mod ap;
mod auroc;
mod bootstrap;
mod components;
pub mod eval;
mod matching;

pub use ap::{average_precision, average_precision_cases, PooledDetection};
pub use auroc::{auroc, auroc_cases};
pub use bootstrap::{bootstrap_ci, nearest_rank_percentile, Metric};
pub use components::{label_components, GtLesion};
pub use eval::{CaseEval, EvalOptions, EvalReport};
pub use matching::{match_candidates, CandidateMatch, DEFAULT_MIN_IOU};

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MetricError {
    #[error("undefined AUROC: {0}")]
    UndefinedAuroc(&'static str),
    #[error("undefined AP: no ground-truth lesions")]
    UndefinedAp,
    #[error("non-finite score {0}")]
    NonFiniteScore(f64),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("bootstrap produced only {valid} defined resamples out of {attempts} draws")]
    BootstrapDegenerate { valid: usize, attempts: usize },
}
