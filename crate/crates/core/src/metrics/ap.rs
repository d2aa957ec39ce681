use super::eval::CaseEval;
use super::MetricError;

/// A candidate in the pooled, cross-case ranking.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PooledDetection<'a> {
    pub case_id: &'a str,
    pub rank: usize,
    pub confidence: f64,
    pub true_positive: bool,
}

/// All-points average precision: `sum_n (R_n - R_{n-1}) * P_n` over the
/// pooled ranking (confidence descending, then case id, then rank; the sort
/// is stable). Recall is measured against `total_gt_lesions`.
pub fn average_precision(
    detections: &[PooledDetection<'_>],
    total_gt_lesions: usize,
) -> Result<f64, MetricError> {
    if total_gt_lesions == 0 {
        return Err(MetricError::UndefinedAp);
    }
    if let Some(bad) = detections.iter().find(|d| !d.confidence.is_finite()) {
        return Err(MetricError::NonFiniteScore(bad.confidence));
    }
    let mut order: Vec<&PooledDetection> = detections.iter().collect();
    order.sort_by(|a, b| {
        b.confidence
            .total_cmp(&a.confidence)
            .then_with(|| a.case_id.cmp(b.case_id))
            .then(a.rank.cmp(&b.rank))
    });
    let gt = total_gt_lesions as f64;
    let mut tp = 0usize;
    let mut ap = 0.0;
    for (n, d) in order.iter().enumerate() {
        if d.true_positive {
            tp += 1;
            // recall steps by 1/gt exactly when a true positive is added
            ap += (tp as f64 / (n + 1) as f64) / gt;
        }
    }
    Ok(ap)
}

/// Pools every case's candidate matches and computes AP against the summed
/// lesion count.
pub fn average_precision_cases<'a>(
    cases: impl IntoIterator<Item = &'a CaseEval>,
) -> Result<f64, MetricError> {
    let mut pooled = Vec::new();
    let mut total = 0;
    for c in cases {
        total += c.num_gt_lesions;
        pooled.extend(c.candidate_matches.iter().map(|m| PooledDetection {
            case_id: &c.case_id,
            rank: m.rank,
            confidence: m.confidence,
            true_positive: m.lesion_id.is_some(),
        }));
    }
    average_precision(&pooled, total)
}
