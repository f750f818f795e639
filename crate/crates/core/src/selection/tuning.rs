//! Tuning-parameter rules. Both return a per-observation penalty level; the
//! sum-of-squares objectives used elsewhere take `n * lambda`.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;

use super::{lasso_gram, Dataset, LassoOptions};
use crate::error::{Error, Result};
use crate::seeds;

/// `sqrt(ln p / n1)`.
pub fn lambda_theory(p: usize, n1: usize) -> f64 {
    ((p as f64).ln() / n1 as f64).sqrt()
}

/// Fifty log-spaced values spanning `[0.01, 1] * ||X^T Y||_inf / n`,
/// decreasing.
pub fn default_cv_grid(data: &Dataset) -> Vec<f64> {
    let top = (data.x().transpose() * data.y()).amax() / data.n() as f64;
    let top = if top > 0.0 { top } else { 1.0 };
    (0..50)
        .map(|k| top * 10f64.powf(-2.0 * k as f64 / 49.0))
        .collect()
}

/// K-fold cross-validation of the plain lasso
/// `(1/(2 n_train)) ||y - X beta||^2 + lambda ||beta||_1`; returns the grid
/// value with the smallest mean held-out squared error (ties go to the larger
/// value).
pub fn lambda_cv(data: &Dataset, folds: usize, grid: &[f64], seed: u64) -> Result<f64> {
    if folds < 2 || folds > data.n() {
        return Err(Error::InvalidInput(format!("cannot run {folds}-fold CV on {} rows", data.n())));
    }
    if grid.is_empty() || grid.iter().any(|l| !(*l > 0.0)) {
        return Err(Error::InvalidInput("CV grid must hold positive values".into()));
    }
    let mut order: Vec<f64> = grid.to_vec();
    order.sort_by(|a, b| b.total_cmp(a));
    let n = data.n();
    let mut rows: Vec<usize> = (0..n).collect();
    rows.shuffle(&mut seeds::rng(seeds::derive(seed, &[seeds::stream::CV])));
    let mut loss = vec![0.0; order.len()];
    for f in 0..folds {
        let test: Vec<usize> = rows.iter().enumerate().filter(|(i, _)| i % folds == f).map(|(_, r)| *r).collect();
        let train: Vec<usize> = rows.iter().enumerate().filter(|(i, _)| i % folds != f).map(|(_, r)| *r).collect();
        let xt = data.x().select_rows(&train);
        let yt = DVector::from_fn(train.len(), |i, _| data.y()[train[i]]);
        let xv: DMatrix<f64> = data.x().select_rows(&test);
        let yv = DVector::from_fn(test.len(), |i, _| data.y()[test[i]]);
        let a = xt.transpose() * &xt;
        let c = xt.transpose() * &yt;
        let mut warm = DVector::zeros(data.p());
        for (k, &lam) in order.iter().enumerate() {
            warm = lasso_gram(&a, &c, lam * train.len() as f64, Some(&warm), LassoOptions::default())?;
            loss[k] += (&yv - &xv * &warm).norm_squared() / n as f64;
        }
    }
    let mut best = 0;
    for k in 1..order.len() {
        if loss[k] < loss[best] {
            best = k;
        }
    }
    Ok(order[best])
}
