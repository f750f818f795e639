//! Data carving: select on a random subset of rows, infer with all of them.

use std::sync::Arc;

use nalgebra::DVector;
use rand::seq::SliceRandom;

use super::{
    estimate_sigma2, extract_kkt, lasso_gram, Dataset, LassoOptions, RandomizationSpec,
    SelectionRecord, TargetConvention,
};
use crate::error::{Error, Result};
use crate::seeds;

/// A row split for carving.
#[derive(Debug, Clone, PartialEq)]
pub struct CarveSplit {
    /// Rows used for selection, increasing.
    pub selection_rows: Vec<usize>,
    /// Rows held out, increasing.
    pub holdout_rows: Vec<usize>,
    /// Realized fraction `n1 / n`.
    pub rho: f64,
    pub spec: RandomizationSpec,
}

impl CarveSplit {
    pub fn selection_data(&self, data: &Dataset) -> Result<Dataset> {
        data.subset(&self.selection_rows)
    }
}

/// Split `floor(rho n)` rows off for selection, deterministically from `seed`.
/// The noise variance in the returned spec is the dataset's, or the full-data
/// least-squares estimate when none is attached.
pub fn carve_split(data: &Dataset, rho: f64, seed: u64) -> Result<CarveSplit> {
    if !(rho > 0.0 && rho < 1.0) {
        return Err(Error::InvalidInput(format!("carving fraction must lie in (0, 1), got {rho}")));
    }
    let n = data.n();
    let n1 = (rho * n as f64).floor() as usize;
    if n1 == 0 || n1 == n {
        return Err(Error::InvalidInput(format!("carving fraction {rho} leaves an empty part of {n} rows")));
    }
    let mut rows: Vec<usize> = (0..n).collect();
    rows.shuffle(&mut seeds::rng(seeds::derive(seed, &[seeds::stream::SPLIT])));
    let mut selection_rows = rows[..n1].to_vec();
    let mut holdout_rows = rows[n1..].to_vec();
    selection_rows.sort_unstable();
    holdout_rows.sort_unstable();
    let sigma2 = match data.sigma2() {
        Some(s) => s,
        None => estimate_sigma2(data)?,
    };
    let rho = n1 as f64 / n as f64;
    Ok(CarveSplit { selection_rows, holdout_rows, rho, spec: RandomizationSpec::carving(rho, sigma2)? })
}

/// Solve `(1/(2 rho)) ||Y1 - X1 beta||^2 + lambda ||beta||_1` on the selection
/// rows and express the result as a randomized lasso on all rows, with
/// `omega = X^T (X beta - Y) - (1/rho) X1^T (X1 beta - Y1)`.
pub fn select_by_carving(
    data: Arc<Dataset>,
    split: &CarveSplit,
    lambda: f64,
    target: TargetConvention,
) -> Result<SelectionRecord> {
    let x1 = data.x().select_rows(&split.selection_rows);
    let y1 = DVector::from_fn(split.selection_rows.len(), |i, _| data.y()[split.selection_rows[i]]);
    let inv_rho = 1.0 / split.rho;
    let a = x1.transpose() * &x1 * inv_rho;
    let c = x1.transpose() * &y1 * inv_rho;
    let beta = lasso_gram(&a, &c, lambda, None, LassoOptions::default())?;
    let x = data.x();
    let omega = x.transpose() * (x * &beta - data.y()) - (x1.transpose() * (&x1 * &beta - &y1)) * inv_rho;
    let mut rec = extract_kkt(data, lambda, &omega, &beta, split.spec.clone(), target)?;
    rec.holdout = Some(split.holdout_rows.clone());
    Ok(rec)
}
