//! Selective p-values from the conditional CDF of the target contrast.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::law::ConditionalLaw;
use crate::error::Result;
use crate::qmc::ReplicateSet;
use crate::selection::SelectionRecord;
use crate::sov::{cdf_estimate, gibson_reorder, Estimate, OrthantGaussian};

/// Estimated conditional CDF `F(theta_hat)` with its replicate standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PValue {
    pub cdf: f64,
    pub stderr: f64,
}

impl PValue {
    /// `1 - F`.
    pub fn upper(&self) -> f64 {
        1.0 - self.cdf
    }

    /// `2 min(F, 1 - F)`.
    pub fn two_sided(&self) -> f64 {
        (2.0 * self.cdf.min(1.0 - self.cdf)).clamp(0.0, 1.0)
    }
}

/// Controls for SOV evaluation of a conditional CDF.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SovOptions {
    pub preintegrate: bool,
    pub reorder: bool,
}

impl Default for SovOptions {
    fn default() -> Self {
        Self { preintegrate: true, reorder: true }
    }
}

/// `F(theta_hat)` under an assembled conditional law.
pub fn pvalue_from_law(law: &ConditionalLaw, reps: &ReplicateSet, opts: SovOptions) -> Result<PValue> {
    let og = if opts.reorder {
        gibson_reorder(law.mu_b.clone(), law.sigma_b.clone())?
    } else {
        OrthantGaussian::new(law.mu_b.clone(), law.sigma_b.clone())?
    };
    let Estimate { value, stderr } = cdf_estimate(&og, &law.functional(law.theta_hat), reps, opts.preintegrate)?;
    Ok(PValue { cdf: value, stderr })
}

/// Conditional CDF of `eta^T beta_hat_M` at its observed value, under the
/// hypothesis `eta^T beta_M = theta`.
pub fn pvalue(rec: &SelectionRecord, eta: &DVector<f64>, theta: f64, reps: &ReplicateSet) -> Result<PValue> {
    pvalue_from_law(&ConditionalLaw::new(rec, eta, theta)?, reps, SovOptions::default())
}
