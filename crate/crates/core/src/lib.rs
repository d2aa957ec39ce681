//! Post-processing and evaluation for lesion detection on 3D probability
//! volumes.
//!
//! * [`volume`]: geometry-aware volumes, MetaImage I/O, ensemble averaging
//! * [`candidates`]: iterative seed-and-grow candidate extraction
//! * [`roi`]: physical-margin crop boxes, crop and uncrop
//! * [`splits`]: lesion-size stratified K-fold assignment
//! * [`metrics`]: AUROC, lesion-level AP, bootstrap intervals, manifest evaluation
//! * [`sweep`]: threshold grid search with CSV/SVG output

pub mod candidates;
pub mod fsutil;
pub mod metrics;
pub mod neighborhood;
pub mod numfmt;
pub mod rng;
pub mod roi;
pub mod splits;
pub mod sweep;
pub mod volume;

pub use candidates::{
    extract_candidates, patient_score, Candidate, ConfidenceRule, DetectionResult,
    ExtractionParams, ThresholdMode,
};
pub use neighborhood::Connectivity;
pub use volume::mha::{read_mha, write_mha};
pub use volume::{mean_volumes, ElementKind, Geometry, ProbabilityMap, Volume, VoxelData};

use thiserror::Error;

/// Errors from the file-level pipeline entry points.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Volume(#[from] volume::VolumeError),
    #[error(transparent)]
    Mha(#[from] volume::mha::MhaError),
    #[error(transparent)]
    Candidate(#[from] candidates::CandidateError),
    #[error(transparent)]
    Roi(#[from] roi::RoiError),
    #[error(transparent)]
    Split(#[from] splits::SplitError),
    #[error(transparent)]
    Metric(#[from] metrics::MetricError),
    #[error("{path}: {source}")]
    File {
        path: std::path::PathBuf,
        #[source]
        source: Box<Error>,
    },
    #[error("invalid manifest: {0}")]
    Manifest(String),
    #[error("invalid sweep config: {0}")]
    SweepConfig(String),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Attaches the offending file path.
    pub fn at(self, path: impl Into<std::path::PathBuf>) -> Self {
        Error::File {
            path: path.into(),
            source: Box::new(self),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
