use super::ci::holdout_estimate;
use super::report::{CoordinateInference, InferenceReport, Method};
use crate::error::{Error, Result};
use crate::num::special::{norm_cdf, norm_inv_cdf};
use crate::selection::SelectionRecord;

/// Classical z-intervals for the selected coefficients using only the
/// hold-out rows.
pub fn splitting_baseline(rec: &SelectionRecord, alpha: f64) -> Result<InferenceReport> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidInput(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    let (est, se) = holdout_estimate(rec)?.ok_or_else(|| {
        Error::RankDeficient("record has no hold-out rows beyond the model size".into())
    })?;
    let q = norm_inv_cdf(1.0 - alpha / 2.0)?;
    let entries = (0..rec.d())
        .map(|j| CoordinateInference {
            index: rec.active[j],
            estimate: est[j],
            pvalue: 2.0 * norm_cdf(-(est[j] / se[j]).abs()),
            ci_lower: est[j] - q * se[j],
            ci_upper: est[j] + q * se[j],
            stderr: 0.0,
            min_ess: None,
            flagged: false,
        })
        .collect();
    Ok(InferenceReport { method: Method::Splitting, entries })
}
