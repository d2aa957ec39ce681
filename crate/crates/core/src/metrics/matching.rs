use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::components::GtLesion;
use super::MetricError;
use crate::candidates::Candidate;

pub const DEFAULT_MIN_IOU: f64 = 0.10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateMatch {
    pub rank: usize,
    pub confidence: f64,
    pub lesion_id: Option<usize>,
    /// IoU with the matched lesion; 0 for false positives.
    pub iou: f64,
}

impl CandidateMatch {
    pub fn is_true_positive(&self) -> bool {
        self.lesion_id.is_some()
    }
}

/// Greedy matching in descending confidence (ties by rank). Each candidate
/// takes the still-unmatched lesion with the highest IoU (ties by lesion id)
/// when that IoU is at least `min_iou` and the overlap is nonempty.
/// Results come back in rank order.
pub fn match_candidates(
    candidates: &[Candidate],
    lesions: &[GtLesion],
    min_iou: f64,
) -> Result<Vec<CandidateMatch>, MetricError> {
    if !(0.0..=1.0).contains(&min_iou) {
        return Err(MetricError::InvalidArgument(format!(
            "min_iou must be in [0, 1], got {min_iou}"
        )));
    }
    let mut owner: HashMap<usize, usize> = HashMap::new();
    for (pos, lesion) in lesions.iter().enumerate() {
        for &v in &lesion.voxels {
            owner.insert(v, pos);
        }
    }
    let mut order: Vec<usize> = (0..candidates.len()).collect();
    order.sort_by(|&a, &b| {
        candidates[b]
            .confidence
            .total_cmp(&candidates[a].confidence)
            .then(candidates[a].rank.cmp(&candidates[b].rank))
    });

    let mut taken = vec![false; lesions.len()];
    let mut matches: Vec<CandidateMatch> = Vec::with_capacity(candidates.len());
    for idx in order {
        let cand = &candidates[idx];
        let mut overlap: HashMap<usize, usize> = HashMap::new();
        for v in &cand.voxels {
            if let Some(&pos) = owner.get(v) {
                *overlap.entry(pos).or_default() += 1;
            }
        }
        let mut best: Option<(usize, f64)> = None;
        for (&pos, &inter) in &overlap {
            if taken[pos] {
                continue;
            }
            let union = cand.voxels.len() + lesions[pos].voxels.len() - inter;
            let iou = inter as f64 / union as f64;
            let better = match best {
                None => true,
                Some((bp, biou)) => {
                    iou > biou || (iou == biou && lesions[pos].lesion_id < lesions[bp].lesion_id)
                }
            };
            if better {
                best = Some((pos, iou));
            }
        }
        let matched = best.filter(|&(_, iou)| iou >= min_iou);
        if let Some((pos, _)) = matched {
            taken[pos] = true;
        }
        matches.push(CandidateMatch {
            rank: cand.rank,
            confidence: cand.confidence as f64,
            lesion_id: matched.map(|(pos, _)| lesions[pos].lesion_id),
            iou: matched.map_or(0.0, |(_, iou)| iou),
        });
    }
    matches.sort_by_key(|m| m.rank);
    Ok(matches)
}
