//! Coordinate-descent lasso in Gram form:
//! `min_beta 1/2 beta^T A beta - c^T beta + lambda ||beta||_1`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::num::linalg::cholesky;

/// Solver controls.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LassoOptions {
    /// Convergence tolerance on the largest scaled coefficient change.
    pub tol: f64,
    pub max_sweeps: usize,
}

impl Default for LassoOptions {
    fn default() -> Self {
        Self { tol: 1e-10, max_sweeps: 100_000 }
    }
}

#[inline]
fn soft(x: f64, t: f64) -> f64 {
    if x > t {
        x - t
    } else if x < -t {
        x + t
    } else {
        0.0
    }
}

/// Objective value `1/2 beta^T A beta - c^T beta + lambda ||beta||_1`.
pub fn gram_objective(a: &DMatrix<f64>, c: &DVector<f64>, lambda: f64, beta: &DVector<f64>) -> f64 {
    0.5 * beta.dot(&(a * beta)) - c.dot(beta) + lambda * beta.lp_norm(1)
}

/// Support of `beta` under the relative threshold `1e-9 max(1, ||beta||_inf)`.
pub fn support(beta: &DVector<f64>) -> Vec<usize> {
    let thr = 1e-9 * beta.amax().max(1.0);
    (0..beta.len()).filter(|&j| beta[j].abs() > thr).collect()
}

/// One cyclic pass over `idx`, keeping `grad = A beta - c` current. Returns
/// the largest scaled coefficient change.
fn sweep(
    a: &DMatrix<f64>,
    lambda: f64,
    idx: &[usize],
    beta: &mut DVector<f64>,
    grad: &mut DVector<f64>,
) -> f64 {
    let mut max_change = 0.0_f64;
    for &j in idx {
        let ajj = a[(j, j)];
        if ajj <= 0.0 {
            continue;
        }
        let old = beta[j];
        let new = soft(ajj * old - grad[j], lambda) / ajj;
        let delta = new - old;
        if delta != 0.0 {
            beta[j] = new;
            grad.axpy(delta, &a.column(j), 1.0);
            max_change = max_change.max(delta.abs() * ajj.sqrt());
        }
    }
    max_change
}

/// Solve the Gram-form lasso by active-set coordinate descent, followed by an
/// exact solve on the detected support when that solve is sign-consistent
/// and satisfies the inactive KKT conditions.
pub fn lasso_gram(
    a: &DMatrix<f64>,
    c: &DVector<f64>,
    lambda: f64,
    warm: Option<&DVector<f64>>,
    opts: LassoOptions,
) -> Result<DVector<f64>> {
    let p = c.len();
    if a.nrows() != p || a.ncols() != p {
        return Err(Error::InvalidInput("Gram matrix and linear term sizes differ".into()));
    }
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(Error::InvalidInput(format!("lambda must be positive, got {lambda}")));
    }
    let mut beta = warm.cloned().unwrap_or_else(|| DVector::zeros(p));
    let mut grad = a * &beta - c;
    let all: Vec<usize> = (0..p).collect();
    let scale = c.amax().max(1.0);
    let tol = opts.tol * scale;
    let mut sweeps = 0;
    loop {
        let full = sweep(a, lambda, &all, &mut beta, &mut grad);
        sweeps += 1;
        if full <= tol {
            break;
        }
        let active = support(&beta);
        loop {
            if sweeps >= opts.max_sweeps {
                return Err(Error::NoConvergence { iterations: sweeps, residual: full });
            }
            let change = sweep(a, lambda, &active, &mut beta, &mut grad);
            sweeps += 1;
            if change <= tol {
                break;
            }
        }
    }
    Ok(polish(a, c, lambda, beta))
}

/// Exact solve of the KKT equations on the support of `beta`.
fn polish(a: &DMatrix<f64>, c: &DVector<f64>, lambda: f64, beta: DVector<f64>) -> DVector<f64> {
    let m = support(&beta);
    if m.is_empty() {
        return DVector::zeros(beta.len());
    }
    let d = m.len();
    let amm = DMatrix::from_fn(d, d, |i, j| a[(m[i], m[j])]);
    let rhs = DVector::from_fn(d, |i, _| c[m[i]] - lambda * beta[m[i]].signum());
    let Ok(f) = cholesky(&amm) else { return beta };
    let sol = f.solve(&rhs);
    if (0..d).any(|i| sol[i].signum() != beta[m[i]].signum() || sol[i] == 0.0) {
        return beta;
    }
    let mut out = DVector::zeros(beta.len());
    for (i, &j) in m.iter().enumerate() {
        out[j] = sol[i];
    }
    let grad = a * &out - c;
    let slack = 1e-12 * c.amax().max(1.0);
    let inactive_ok = (0..beta.len()).filter(|j| !m.contains(j)).all(|j| grad[j].abs() <= lambda + slack);
    if inactive_ok {
        out
    } else {
        beta
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn orthonormal_soft_threshold() {
        let a = DMatrix::identity(4, 4);
        let c = DVector::from_vec(vec![3.0, -0.5, -2.0, 1.0]);
        let beta = lasso_gram(&a, &c, 1.0, None, LassoOptions::default()).unwrap();
        assert_eq!(beta.as_slice(), &[2.0, 0.0, -1.0, 0.0]);
    }

    #[test]
    fn null_threshold() {
        let a = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let c = DVector::from_vec(vec![1.0, -0.7]);
        let beta = lasso_gram(&a, &c, 1.0, None, LassoOptions::default()).unwrap();
        assert_eq!(beta, DVector::zeros(2));
    }

    #[test]
    fn rejects_bad_lambda() {
        let a = DMatrix::identity(1, 1);
        let c = DVector::from_element(1, 1.0);
        assert!(lasso_gram(&a, &c, 0.0, None, LassoOptions::default()).is_err());
    }
}
