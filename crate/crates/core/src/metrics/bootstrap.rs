use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::eval::CaseEval;
use super::{auroc_cases, average_precision_cases, MetricError};
use crate::rng::Stream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Auroc,
    Ap,
}

impl Metric {
    pub fn compute<'a>(
        self,
        cases: impl IntoIterator<Item = &'a CaseEval>,
    ) -> Result<f64, MetricError> {
        match self {
            Metric::Auroc => auroc_cases(cases),
            Metric::Ap => average_precision_cases(cases),
        }
    }
}

/// Value at 1-based rank `ceil(q * n)` of an ascending slice, `q` in (0, 1].
pub fn nearest_rank_percentile(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty());
    // the small offset keeps products like 0.025 * 1000 from rounding up a rank
    let rank = ((q * sorted.len() as f64) - 1e-9).ceil().max(1.0) as usize;
    sorted[rank.min(sorted.len()) - 1]
}

/// Case-level percentile bootstrap interval.
///
/// Draw `j` (0-based) resamples `n` cases with replacement from
/// `Stream::new(seed, j)`. Draws whose metric is undefined are skipped and
/// the next draw index is used instead, up to `10 * n_resamples` draws in
/// total. The first `n_resamples` defined values are kept, so the interval
/// does not depend on how many threads computed the draws.
pub fn bootstrap_ci(
    per_case: &[CaseEval],
    metric: Metric,
    n_resamples: usize,
    seed: u64,
    level: f64,
) -> Result<(f64, f64), MetricError> {
    if per_case.is_empty() {
        return Err(MetricError::InvalidArgument("no cases to resample".into()));
    }
    if n_resamples == 0 {
        return Err(MetricError::InvalidArgument(
            "n_resamples must be positive".into(),
        ));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(MetricError::InvalidArgument(format!(
            "level must be in (0, 1), got {level}"
        )));
    }
    metric.compute(per_case)?;

    let n = per_case.len();
    let max_attempts = n_resamples.saturating_mul(10);
    let mut values = Vec::with_capacity(n_resamples);
    let mut next = 0usize;
    while values.len() < n_resamples && next < max_attempts {
        let batch_end = (next + (n_resamples - values.len())).min(max_attempts);
        let batch: Vec<Option<f64>> = (next..batch_end)
            .into_par_iter()
            .map(|draw| {
                let mut rng = Stream::new(seed, draw as u64);
                let sample: Vec<&CaseEval> = (0..n)
                    .map(|_| &per_case[rng.below(n as u64) as usize])
                    .collect();
                metric.compute(sample).ok()
            })
            .collect();
        next = batch_end;
        values.extend(batch.into_iter().flatten().take(n_resamples - values.len()));
    }
    if values.len() < n_resamples {
        return Err(MetricError::BootstrapDegenerate {
            valid: values.len(),
            attempts: next,
        });
    }
    values.sort_by(f64::total_cmp);
    let tail = (1.0 - level) / 2.0;
    Ok((
        nearest_rank_percentile(&values, tail),
        nearest_rank_percentile(&values, 1.0 - tail),
    ))
}
