use super::eval::CaseEval;
use super::MetricError;

/// Mann-Whitney AUROC: the fraction of (positive, negative) pairs where the
/// positive scores higher, ties counting one half.
///
/// Counts are accumulated exactly in integers (twice the statistic) and
/// divided once at the end.
pub fn auroc(pos: &[f64], neg: &[f64]) -> Result<f64, MetricError> {
    if pos.is_empty() {
        return Err(MetricError::UndefinedAuroc("no positive cases"));
    }
    if neg.is_empty() {
        return Err(MetricError::UndefinedAuroc("no negative cases"));
    }
    if let Some(&bad) = pos.iter().chain(neg).find(|s| !s.is_finite()) {
        return Err(MetricError::NonFiniteScore(bad));
    }
    let mut sorted_neg = neg.to_vec();
    sorted_neg.sort_by(f64::total_cmp);
    let mut twice_u: u128 = 0;
    for &p in pos {
        let below = sorted_neg.partition_point(|&n| n < p);
        let at_or_below = sorted_neg.partition_point(|&n| n <= p);
        twice_u += 2 * below as u128 + (at_or_below - below) as u128;
    }
    let pairs = pos.len() as f64 * neg.len() as f64;
    Ok(twice_u as f64 / (2.0 * pairs))
}

/// AUROC of patient scores split by label.
pub fn auroc_cases<'a>(cases: impl IntoIterator<Item = &'a CaseEval>) -> Result<f64, MetricError> {
    let mut pos = Vec::new();
    let mut neg = Vec::new();
    for c in cases {
        if c.label.is_positive() {
            pos.push(c.patient_score);
        } else {
            neg.push(c.patient_score);
        }
    }
    auroc(&pos, &neg)
}
