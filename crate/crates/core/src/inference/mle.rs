//! Selective maximum likelihood: minimise the selection-adjusted negative
//! log-likelihood with SOV estimates of the orthant probability and its
//! derivatives, then form Wald intervals from the observed information.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::report::{CoordinateInference, InferenceReport, Method};
use crate::error::{Error, Result};
use crate::num::linalg::{cholesky, min_eigenvalue, symmetrize, SymMatrix};
use crate::num::special::{norm_cdf, norm_inv_cdf};
use crate::qmc::{replicate_set, split_budget, ReplicateSet};
use crate::selection::SelectionRecord;
use crate::seeds;
use crate::sov::{gibson_reorder, log_orthant_prob, truncated_moments, OrthantGaussian, TruncatedMoments};

/// Where Wald intervals are centred.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WaldCenter {
    /// The selective MLE.
    #[default]
    Mle,
    /// The unadjusted target statistic.
    Observed,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MleOptions {
    /// Total RQMC points per objective/gradient evaluation.
    pub points: usize,
    /// Replicates the points are split into.
    pub batches: usize,
    /// Total points for the final observed information.
    pub hessian_points: usize,
    /// Initial step on the `Sigma`-preconditioned descent direction.
    pub step: f64,
    pub max_iter: usize,
    /// Relative objective change that ends the descent.
    pub obj_tol: f64,
    /// Bound on `sqrt(g^T Sigma g)` that ends the descent.
    pub grad_tol: f64,
    pub alpha: f64,
    pub center: WaldCenter,
    pub seed: u64,
    /// Record the smallest Hessian eigenvalue at every iterate.
    pub track_hessian: bool,
}

impl Default for MleOptions {
    fn default() -> Self {
        Self {
            points: 256,
            batches: 8,
            hessian_points: 1 << 12,
            step: 1.0,
            max_iter: 5000,
            obj_tol: 1e-8,
            grad_tol: 1e-6,
            alpha: 0.05,
            center: WaldCenter::Mle,
            seed: 0,
            track_hessian: false,
        }
    }
}

/// Why the descent stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    GradientTolerance,
    ObjectiveTolerance,
    /// Backtracking could not find a decrease; the iterate is a minimiser of
    /// the frozen objective up to the Monte Carlo gradient error.
    LineSearchStall,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MleResult {
    pub beta: DVector<f64>,
    /// Observed information at the estimate.
    pub info: SymMatrix,
    pub se: DVector<f64>,
    pub ci: Vec<(f64, f64)>,
    pub iterations: usize,
    pub grad_norm: f64,
    pub stop: StopReason,
    /// Negative log-likelihood at every accepted iterate.
    pub nll: Vec<f64>,
    /// Smallest Hessian eigenvalue per iterate (when tracked).
    pub min_hessian_eig: Vec<f64>,
}

/// The selection-adjusted negative log-likelihood of `beta_M` evaluated with
/// frozen RQMC points and a frozen variable ordering.
#[derive(Debug, Clone)]
pub struct SelectiveLikelihood {
    pub beta_hat: DVector<f64>,
    pub sigma: SymMatrix,
    pub sigma_inv: DMatrix<f64>,
    pub signs: DVector<f64>,
    /// `-H^{-1} Q_2^T Omega^{-1} (r + s)`
    pub offset: DVector<f64>,
    /// `H^{-1} + D Sigma D`
    pub sigma_b: SymMatrix,
    pub sigma_b_inv: DMatrix<f64>,
    perm: Vec<usize>,
    reps: ReplicateSet,
}

impl SelectiveLikelihood {
    pub fn new(rec: &SelectionRecord, reps: ReplicateSet) -> Result<Self> {
        let d = rec.d();
        let x = rec.data.x();
        let omega = rec.spec.omega(x)?;
        let q2 = rec.q2();
        let omega_inv_q2 = cholesky(omega.as_matrix())?.solve_mat(&q2);
        let h = symmetrize(&(q2.transpose() * &omega_inv_q2));
        let h_inv = cholesky(&h).map_err(|_| Error::SingularH)?.inverse();
        let offset = -(&h_inv * (omega_inv_q2.transpose() * (&rec.r + &rec.s)));
        let sigma = rec.target_cov()?;
        let sigma_inv = cholesky(sigma.as_matrix())?.inverse();
        let dsd = DMatrix::from_fn(d, d, |i, j| rec.signs[i] * rec.signs[j] * sigma.as_matrix()[(i, j)]);
        let sigma_b = SymMatrix::new(symmetrize(&(h_inv + dsd)))?;
        let sigma_b_inv = cholesky(sigma_b.as_matrix())?.inverse();
        let mu0 = rec.beta_hat.component_mul(&rec.signs) + &offset;
        let perm = gibson_reorder(mu0, sigma_b.clone())?.permutation().to_vec();
        Ok(Self { beta_hat: rec.beta_hat.clone(), sigma, sigma_inv, signs: rec.signs.clone(), offset, sigma_b, sigma_b_inv, perm, reps })
    }

    pub fn dim(&self) -> usize {
        self.beta_hat.len()
    }

    /// `mu_b(beta) = D beta + offset`.
    pub fn mu_b(&self, beta: &DVector<f64>) -> DVector<f64> {
        beta.component_mul(&self.signs) + &self.offset
    }

    fn orthant(&self, beta: &DVector<f64>) -> Result<OrthantGaussian> {
        OrthantGaussian::with_permutation(self.mu_b(beta), self.sigma_b.clone(), self.perm.clone())
    }

    /// Negative log-likelihood up to a constant.
    pub fn objective(&self, beta: &DVector<f64>) -> Result<f64> {
        let diff = &self.beta_hat - beta;
        let quad = 0.5 * diff.dot(&(&self.sigma_inv * &diff));
        Ok(quad + log_orthant_prob(&self.orthant(beta)?, &self.reps)?)
    }

    /// Gradient from truncated moments, together with those moments.
    pub fn gradient(&self, beta: &DVector<f64>) -> Result<(DVector<f64>, TruncatedMoments)> {
        let og = self.orthant(beta)?;
        let mom = truncated_moments(&og, &self.reps)?;
        let g = -(&self.sigma_inv * (&self.beta_hat - beta))
            + (&self.sigma_b_inv * (&mom.mean - og.mean())).component_mul(&self.signs);
        Ok((g, mom))
    }

    /// `Sigma^{-1} + D (Sigma_b^{-1} Sigma_tilde Sigma_b^{-1} - Sigma_b^{-1}) D`.
    pub fn hessian(&self, mom: &TruncatedMoments) -> DMatrix<f64> {
        let sbi = &self.sigma_b_inv;
        let inner = sbi * mom.cov.as_matrix() * sbi - sbi;
        let d = self.dim();
        let scaled = DMatrix::from_fn(d, d, |i, j| self.signs[i] * self.signs[j] * inner[(i, j)]);
        symmetrize(&(&self.sigma_inv + scaled))
    }
}

/// Selective MLE with observed-information Wald intervals.
pub fn selective_mle(rec: &SelectionRecord, opts: &MleOptions) -> Result<MleResult> {
    let d = rec.d();
    let per = split_budget(opts.points, opts.batches)?;
    let reps = replicate_set(d, per, opts.batches, seeds::derive(opts.seed, &[seeds::stream::MLE]))?;
    let lik = SelectiveLikelihood::new(rec, reps)?;
    let sigma = lik.sigma.as_matrix().clone();

    let mut beta = lik.beta_hat.clone();
    let mut f = lik.objective(&beta)?;
    let mut nll = vec![f];
    let mut min_eigs = Vec::new();
    let mut iterations = 0;
    let (stop, grad_norm) = loop {
        let (g, mom) = lik.gradient(&beta)?;
        if opts.track_hessian {
            min_eigs.push(min_eigenvalue(&lik.hessian(&mom)));
        }
        let dir = -(&sigma * &g);
        let decrease = -g.dot(&dir);
        let gnorm = decrease.max(0.0).sqrt();
        if gnorm < opts.grad_tol {
            break (StopReason::GradientTolerance, gnorm);
        }
        if iterations >= opts.max_iter {
            return Err(Error::NoConvergence { iterations, residual: gnorm });
        }
        let mut t = opts.step;
        let accepted = loop {
            let cand = &beta + &dir * t;
            let fc = lik.objective(&cand)?;
            if fc <= f - 1e-4 * t * decrease {
                break Some((cand, fc));
            }
            t *= 0.5;
            if t < 1e-10 {
                break None;
            }
        };
        iterations += 1;
        let Some((cand, fc)) = accepted else {
            break (StopReason::LineSearchStall, gnorm);
        };
        let change = (f - fc).abs();
        beta = cand;
        f = fc;
        nll.push(f);
        if change <= opts.obj_tol * f.abs().max(1.0) {
            break (StopReason::ObjectiveTolerance, gnorm);
        }
    };

    // observed information from a fresh, larger sample and a fresh ordering
    let per_h = split_budget(opts.hessian_points, opts.batches)?;
    let reps_h = replicate_set(d, per_h, opts.batches, seeds::derive(opts.seed, &[seeds::stream::HESSIAN]))?;
    let og = gibson_reorder(lik.mu_b(&beta), lik.sigma_b.clone())?;
    let mom = truncated_moments(&og, &reps_h)?;
    let info = lik.hessian(&mom);
    let chol = cholesky(&info).map_err(|_| Error::HessianNotPD(min_eigenvalue(&info)))?;
    let cov = chol.inverse();
    let se = DVector::from_fn(d, |j, _| cov[(j, j)].sqrt());
    let q = norm_inv_cdf(1.0 - opts.alpha / 2.0)?;
    let center = match opts.center {
        WaldCenter::Mle => beta.clone(),
        WaldCenter::Observed => lik.beta_hat.clone(),
    };
    let ci = (0..d).map(|j| (center[j] - q * se[j], center[j] + q * se[j])).collect();
    Ok(MleResult {
        beta,
        info: SymMatrix::new(info)?,
        se,
        ci,
        iterations,
        grad_norm,
        stop,
        nll,
        min_hessian_eig: min_eigs,
    })
}

impl MleResult {
    pub fn report(&self, rec: &SelectionRecord) -> InferenceReport {
        let entries = (0..rec.d())
            .map(|j| CoordinateInference {
                index: rec.active[j],
                estimate: self.beta[j],
                pvalue: 2.0 * norm_cdf(-(self.beta[j] / self.se[j]).abs()),
                ci_lower: self.ci[j].0,
                ci_upper: self.ci[j].1,
                stderr: 0.0,
                min_ess: None,
                flagged: false,
            })
            .collect();
        InferenceReport { method: Method::MleSov, entries }
    }
}
