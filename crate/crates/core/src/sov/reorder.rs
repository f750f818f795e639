//! Greedy variable ordering for sequential orthant sampling.

use nalgebra::{DMatrix, DVector};

use super::OrthantGaussian;
use crate::error::{Error, Result};
use crate::num::linalg::SymMatrix;
use crate::num::special::{inv_mills, log_norm_sf};

/// Order variables so that, at each step, the next one is the least likely to
/// clear its truncation bound given the variables already placed (fixed at
/// their truncated means). The Cholesky factor of the permuted covariance is
/// built during the same scan.
pub fn gibson_reorder(mu: DVector<f64>, sigma: SymMatrix) -> Result<OrthantGaussian> {
    let d = mu.len();
    if sigma.dim() != d || d == 0 {
        return Err(Error::InvalidInput("mean and covariance dimensions differ".into()));
    }
    let mut c = sigma.as_matrix().clone();
    let mut m = mu.clone();
    let mut perm: Vec<usize> = (0..d).collect();
    let mut l = DMatrix::<f64>::zeros(d, d);
    let mut y = vec![0.0; d];
    let max_diag = (0..d).map(|i| c[(i, i)]).fold(0.0_f64, f64::max);
    let tol = d as f64 * f64::EPSILON * max_diag;

    for k in 0..d {
        let mut best = k;
        let mut best_score = f64::INFINITY;
        for j in k..d {
            let var: f64 = c[(j, j)] - (0..k).map(|t| l[(j, t)] * l[(j, t)]).sum::<f64>();
            if !(var > tol) {
                continue;
            }
            let shift: f64 = (0..k).map(|t| l[(j, t)] * y[t]).sum();
            let a = -(m[j] + shift) / var.sqrt();
            let score = log_norm_sf(a);
            if score < best_score {
                best_score = score;
                best = j;
            }
        }
        if best != k {
            c.swap_rows(k, best);
            c.swap_columns(k, best);
            l.swap_rows(k, best);
            m.swap_rows(k, best);
            perm.swap(k, best);
        }
        let var: f64 = c[(k, k)] - (0..k).map(|t| l[(k, t)] * l[(k, t)]).sum::<f64>();
        if !(var > tol) {
            return Err(Error::NotPositiveDefinite { index: k, pivot: var });
        }
        let lkk = var.sqrt();
        l[(k, k)] = lkk;
        for i in (k + 1)..d {
            let s: f64 = c[(i, k)] - (0..k).map(|t| l[(i, t)] * l[(k, t)]).sum::<f64>();
            l[(i, k)] = s / lkk;
        }
        let shift: f64 = (0..k).map(|t| l[(k, t)] * y[t]).sum();
        y[k] = inv_mills(-(m[k] + shift) / lkk);
    }
    Ok(OrthantGaussian::from_parts(mu, sigma, perm, l))
}
