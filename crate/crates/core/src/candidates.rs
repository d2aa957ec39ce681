//! Iterative lesion candidate extraction from a probability map.
//!
//! Each iteration takes the most confident voxel left in a working copy of
//! the map as a seed, grows a connected region through voxels at or above a
//! threshold, and removes that region from the working map. The threshold is
//! either fixed or a fraction `alpha` of the seed's probability.
//!
//! Thresholds are compared in f64 (`p as f64 >= tau`). Argmax ties go to
//! the smallest linear index.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::neighborhood::{Connectivity, Neighbors};
use crate::volume::{Geometry, ProbabilityMap, VolumeError};

/// Working-map size above which the seed search runs in parallel chunks.
const PARALLEL_ARGMAX_MIN: usize = 1 << 16;
const ARGMAX_CHUNK: usize = 1 << 14;

#[derive(Debug, Error, PartialEq)]
pub enum CandidateError {
    #[error("invalid extraction parameters: {0}")]
    InvalidParams(String),
    #[error(transparent)]
    Volume(#[from] VolumeError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum ThresholdMode {
    /// `tau = alpha * P(seed)`.
    Adaptive {
        alpha: f64,
    },
    Fixed {
        tau: f64,
    },
}

/// How the per-candidate confidence written to the detection map is derived.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConfidenceRule {
    /// The seed probability.
    #[default]
    Seed,
    /// Mean probability over the region.
    Mean,
}

impl std::str::FromStr for ConfidenceRule {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "seed" => Ok(ConfidenceRule::Seed),
            "mean" => Ok(ConfidenceRule::Mean),
            _ => Err(format!("confidence must be `seed` or `mean`, got `{s}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExtractionParams {
    #[serde(flatten)]
    pub threshold: ThresholdMode,
    pub max_candidates: usize,
    pub min_seed_prob: f64,
    pub min_voxels: usize,
    pub connectivity: Connectivity,
    #[serde(default)]
    pub confidence: ConfidenceRule,
}

impl ExtractionParams {
    /// The final operating point: adaptive threshold with alpha = 1/15.
    pub const DEFAULT_ALPHA: f64 = 1.0 / 15.0;
    /// The conventional fixed threshold used as a baseline.
    pub const BASELINE_TAU: f64 = 0.4;

    pub fn adaptive(alpha: f64) -> Self {
        ExtractionParams {
            threshold: ThresholdMode::Adaptive { alpha },
            ..Self::default()
        }
    }

    pub fn fixed(tau: f64) -> Self {
        ExtractionParams {
            threshold: ThresholdMode::Fixed { tau },
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), CandidateError> {
        let unit = |x: f64| x.is_finite() && x > 0.0 && x <= 1.0;
        match self.threshold {
            ThresholdMode::Adaptive { alpha } if !unit(alpha) => {
                return Err(CandidateError::InvalidParams(format!(
                    "alpha must be in (0, 1], got {alpha}"
                )))
            }
            ThresholdMode::Fixed { tau } if !unit(tau) => {
                return Err(CandidateError::InvalidParams(format!(
                    "tau must be in (0, 1], got {tau}"
                )))
            }
            _ => {}
        }
        if self.max_candidates == 0 {
            return Err(CandidateError::InvalidParams(
                "max_candidates must be at least 1".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.min_seed_prob) {
            return Err(CandidateError::InvalidParams(format!(
                "min_seed_prob must be in [0, 1], got {}",
                self.min_seed_prob
            )));
        }
        Ok(())
    }

    /// Upper bound on seed iterations, counting undersized regions.
    pub fn iteration_cap(&self) -> usize {
        32.max(self.max_candidates.saturating_mul(4))
    }

    fn threshold_for(&self, seed_prob: f32) -> f64 {
        match self.threshold {
            ThresholdMode::Adaptive { alpha } => alpha * seed_prob as f64,
            ThresholdMode::Fixed { tau } => tau,
        }
    }
}

impl Default for ExtractionParams {
    fn default() -> Self {
        ExtractionParams {
            threshold: ThresholdMode::Adaptive {
                alpha: Self::DEFAULT_ALPHA,
            },
            max_candidates: 5,
            min_seed_prob: 1e-6,
            min_voxels: 10,
            connectivity: Connectivity::TwentySix,
            confidence: ConfidenceRule::Seed,
        }
    }
}

/// One extracted region. `voxels` holds sorted linear indices.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub rank: usize,
    pub seed: [usize; 3],
    pub seed_index: usize,
    pub seed_prob: f32,
    /// Growth threshold used for this region.
    pub threshold: f64,
    pub voxels: Vec<usize>,
    pub confidence: f32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectionResult {
    pub candidates: Vec<Candidate>,
    pub detection_map: ProbabilityMap,
}

pub fn extract_candidates(
    map: &ProbabilityMap,
    params: &ExtractionParams,
) -> Result<DetectionResult, CandidateError> {
    params.validate()?;
    let geometry = *map.geometry();
    let original = map.values();
    let mut working = original.to_vec();
    let neighbors = Neighbors::new(&geometry, params.connectivity);
    let mut candidates: Vec<Candidate> = Vec::new();
    let mut region: Vec<usize> = Vec::new();

    for _ in 0..params.iteration_cap() {
        if candidates.len() >= params.max_candidates {
            break;
        }
        let (seed_index, seed_prob) = argmax(&working);
        // A zero seed would grow over already-removed voxels; nothing is left.
        if seed_prob <= 0.0 || (seed_prob as f64) < params.min_seed_prob {
            break;
        }
        let threshold = params.threshold_for(seed_prob);

        region.clear();
        region.push(seed_index);
        working[seed_index] = 0.0;
        let mut head = 0;
        while head < region.len() {
            let v = region[head];
            head += 1;
            neighbors.for_each(v, |n| {
                let w = working[n];
                if w > 0.0 && w as f64 >= threshold {
                    working[n] = 0.0;
                    region.push(n);
                }
            });
        }

        if region.len() >= params.min_voxels {
            let mut voxels = region.clone();
            voxels.sort_unstable();
            let confidence = match params.confidence {
                ConfidenceRule::Seed => seed_prob,
                ConfidenceRule::Mean => {
                    let sum: f64 = voxels.iter().map(|&i| original[i] as f64).sum();
                    (sum / voxels.len() as f64) as f32
                }
            };
            candidates.push(Candidate {
                rank: candidates.len(),
                seed: geometry.voxel_index(seed_index),
                seed_index,
                seed_prob,
                threshold,
                voxels,
                confidence,
            });
        }
    }

    let detection_map = paint(&geometry, &candidates)?;
    Ok(DetectionResult {
        candidates,
        detection_map,
    })
}

/// Maximum of the detection map; 0 when nothing was detected.
pub fn patient_score(result: &DetectionResult) -> f64 {
    result.detection_map.max() as f64
}

fn paint(geometry: &Geometry, candidates: &[Candidate]) -> Result<ProbabilityMap, VolumeError> {
    let mut values = vec![0.0f32; geometry.num_voxels()];
    for c in candidates {
        for &v in &c.voxels {
            values[v] = c.confidence;
        }
    }
    ProbabilityMap::from_values(*geometry, values)
}

fn better(a: (usize, f32), b: (usize, f32)) -> (usize, f32) {
    if a.1 > b.1 || (a.1 == b.1 && a.0 < b.0) {
        a
    } else {
        b
    }
}

fn argmax_seq(values: &[f32], base: usize) -> (usize, f32) {
    let mut best = (base, f32::NEG_INFINITY);
    for (i, &v) in values.iter().enumerate() {
        if v > best.1 {
            best = (base + i, v);
        }
    }
    best
}

/// Largest value and its smallest linear index.
fn argmax(values: &[f32]) -> (usize, f32) {
    if values.len() < PARALLEL_ARGMAX_MIN {
        return argmax_seq(values, 0);
    }
    values
        .par_chunks(ARGMAX_CHUNK)
        .enumerate()
        .map(|(ci, chunk)| argmax_seq(chunk, ci * ARGMAX_CHUNK))
        .reduce(|| (usize::MAX, f32::NEG_INFINITY), better)
}

/// Recovers candidates from a detection map: each maximal connected set of
/// voxels sharing one nonzero value is a candidate with that value as its
/// confidence. Ranks follow descending confidence, then smallest voxel index.
///
/// Adjacent candidates written with exactly equal confidence merge into one.
pub fn candidates_from_detection_map(
    detection: &ProbabilityMap,
    connectivity: Connectivity,
) -> Vec<Candidate> {
    let geometry = *detection.geometry();
    let values = detection.values();
    let neighbors = Neighbors::new(&geometry, connectivity);
    let mut visited = vec![false; values.len()];
    let mut found = Vec::new();
    for start in 0..values.len() {
        let value = values[start];
        if visited[start] || value == 0.0 {
            continue;
        }
        visited[start] = true;
        let mut region = vec![start];
        let mut head = 0;
        while head < region.len() {
            let v = region[head];
            head += 1;
            neighbors.for_each(v, |n| {
                if !visited[n] && values[n] == value {
                    visited[n] = true;
                    region.push(n);
                }
            });
        }
        region.sort_unstable();
        found.push(Candidate {
            rank: 0,
            seed: geometry.voxel_index(start),
            seed_index: start,
            seed_prob: value,
            threshold: value as f64,
            voxels: region,
            confidence: value,
        });
    }
    found.sort_by(|a, b| {
        b.confidence
            .total_cmp(&a.confidence)
            .then(a.seed_index.cmp(&b.seed_index))
    });
    for (rank, c) in found.iter_mut().enumerate() {
        c.rank = rank;
    }
    found
}

/// Per-case candidate list as written next to a detection map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateReport {
    pub case_id: String,
    pub params: ExtractionParams,
    pub candidates: Vec<CandidateSummary>,
    pub patient_score: f32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateSummary {
    pub rank: usize,
    pub seed: [usize; 3],
    pub seed_prob: f32,
    pub num_voxels: usize,
    pub confidence: f32,
}

impl CandidateReport {
    pub fn new(
        case_id: impl Into<String>,
        params: ExtractionParams,
        result: &DetectionResult,
    ) -> Self {
        CandidateReport {
            case_id: case_id.into(),
            params,
            candidates: result
                .candidates
                .iter()
                .map(|c| CandidateSummary {
                    rank: c.rank,
                    seed: c.seed,
                    seed_prob: c.seed_prob,
                    num_voxels: c.voxels.len(),
                    confidence: c.confidence,
                })
                .collect(),
            patient_score: result.detection_map.max(),
        }
    }
}
