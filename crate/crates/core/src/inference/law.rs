//! Conditional law of the selection variables given a linear contrast of the
//! target, the `eta`-free reference law, and the importance weight linking
//! the two.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::num::linalg::{cholesky, symmetrize, SymMatrix};
use crate::selection::{SelectionRecord, TargetConvention};
use crate::sov::LinearGaussianFunctional;

/// Which set of formulas produced a [`ConditionalLaw`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LawPath {
    /// General randomization covariance.
    Generic,
    /// Shortcut for `Omega = kappa^{-1} sigma2 X^T X`.
    Proportional,
}

/// Law of the selection variables `b` and of `theta_hat = eta^T beta_hat_M`
/// given `b`, for a hypothesised value `theta` of `eta^T beta_M`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalLaw {
    pub path: LawPath,
    pub eta: DVector<f64>,
    pub theta: f64,
    /// Observed `eta^T beta_hat_M`.
    pub theta_hat: f64,
    /// Covariance of the target statistic.
    pub sigma: SymMatrix,
    /// `eta^T Sigma eta`.
    pub nu: f64,
    /// `D Sigma eta / nu`.
    pub c_tilde: DVector<f64>,
    /// `r + s + Q_1 beta_perp`, with `beta_perp = beta_hat_M - c theta_hat`.
    pub t: DVector<f64>,
    /// `Q_2^T Omega^{-1} Q_2`.
    pub h: SymMatrix,
    pub h_inv: SymMatrix,
    /// `Q_2^T Omega^{-1} t`.
    pub k: DVector<f64>,
    /// Conditional variance of `theta_hat` given `b`.
    pub sigma2_theta: f64,
    pub sigma_b: SymMatrix,
    pub mu_b: DVector<f64>,
}

#[allow(clippy::type_complexity)]
fn contrast_parts(rec: &SelectionRecord, eta: &DVector<f64>) -> Result<(SymMatrix, f64, DVector<f64>, f64, DVector<f64>)> {
    let d = rec.d();
    if eta.len() != d {
        return Err(Error::InvalidInput(format!("contrast has length {}, model has {d} variables", eta.len())));
    }
    let sigma = rec.target_cov()?;
    let s_eta = sigma.as_matrix() * eta;
    let nu = eta.dot(&s_eta);
    if !(nu > 0.0) {
        return Err(Error::InvalidInput("contrast has zero variance".into()));
    }
    let c = s_eta / nu;
    let c_tilde = c.component_mul(&rec.signs);
    let theta_hat = eta.dot(&rec.beta_hat);
    let beta_perp = &rec.beta_hat - &c * theta_hat;
    let t = &rec.r + &rec.s + rec.q1() * beta_perp;
    Ok((sigma, nu, c_tilde, theta_hat, t))
}

fn invert_h(h: DMatrix<f64>) -> Result<(SymMatrix, SymMatrix)> {
    let h = SymMatrix::new(symmetrize(&h)).map_err(|_| Error::SingularH)?;
    let inv = cholesky(h.as_matrix()).map_err(|_| Error::SingularH)?.inverse();
    Ok((h, SymMatrix::new(inv)?))
}

impl ConditionalLaw {
    /// Proportional-covariance shortcut when available, generic otherwise.
    pub fn new(rec: &SelectionRecord, eta: &DVector<f64>, theta: f64) -> Result<Self> {
        if rec.spec.kappa().is_some() {
            Self::proportional(rec, eta, theta)
        } else {
            Self::generic(rec, eta, theta)
        }
    }

    /// Formulas valid for any randomization covariance.
    pub fn generic(rec: &SelectionRecord, eta: &DVector<f64>, theta: f64) -> Result<Self> {
        let (sigma, nu, c_tilde, theta_hat, t) = contrast_parts(rec, eta)?;
        let x = rec.data.x();
        let omega = rec.spec.omega(x)?;
        let q2 = rec.q2();
        let omega_inv_q2 = cholesky(omega.as_matrix())?.solve_mat(&q2);
        let (h, h_inv) = invert_h(q2.transpose() * &omega_inv_q2)?;
        let k = omega_inv_q2.transpose() * &t;
        let hc = h.as_matrix() * &c_tilde;
        let sigma2_theta = 1.0 / (1.0 / nu + c_tilde.dot(&hc));
        Self::assemble(LawPath::Generic, eta, theta, theta_hat, sigma, nu, c_tilde, t, h, h_inv, k, sigma2_theta)
    }

    /// Formulas for `Omega = kappa^{-1} sigma2 X^T X`, where only the selected
    /// coordinates of `t` enter.
    pub fn proportional(rec: &SelectionRecord, eta: &DVector<f64>, theta: f64) -> Result<Self> {
        let kappa = rec
            .spec
            .kappa()
            .ok_or_else(|| Error::InvalidInput("randomization covariance is not proportional to X^T X".into()))?;
        let (sigma, nu, c_tilde, theta_hat, t) = contrast_parts(rec, eta)?;
        let scale = kappa / rec.sigma2;
        let xm = rec.x_active();
        let mut dgd = xm.transpose() * &xm;
        for i in 0..rec.d() {
            for j in 0..rec.d() {
                dgd[(i, j)] *= rec.signs[i] * rec.signs[j] * scale;
            }
        }
        let (h, h_inv) = invert_h(dgd)?;
        let t_m = DVector::from_fn(rec.d(), |i, _| t[rec.active[i]]);
        let k = t_m.component_mul(&rec.signs) * scale;
        let sigma2_theta = match rec.target {
            TargetConvention::Submodel => nu / (1.0 + kappa),
            TargetConvention::FullModel => 1.0 / (1.0 / nu + c_tilde.dot(&(h.as_matrix() * &c_tilde))),
        };
        Self::assemble(LawPath::Proportional, eta, theta, theta_hat, sigma, nu, c_tilde, t, h, h_inv, k, sigma2_theta)
    }

    #[allow(clippy::too_many_arguments)]
    fn assemble(
        path: LawPath,
        eta: &DVector<f64>,
        theta: f64,
        theta_hat: f64,
        sigma: SymMatrix,
        nu: f64,
        c_tilde: DVector<f64>,
        t: DVector<f64>,
        h: SymMatrix,
        h_inv: SymMatrix,
        k: DVector<f64>,
        sigma2_theta: f64,
    ) -> Result<Self> {
        let sigma_b = SymMatrix::new(h_inv.as_matrix() + &c_tilde * c_tilde.transpose() * nu)?;
        let mu_b = -(h_inv.as_matrix() * &k) + &c_tilde * theta;
        Ok(Self {
            path,
            eta: eta.clone(),
            theta,
            theta_hat,
            sigma,
            nu,
            c_tilde,
            t,
            h,
            h_inv,
            k,
            sigma2_theta,
            sigma_b,
            mu_b,
        })
    }

    pub fn sigma_theta(&self) -> f64 {
        self.sigma2_theta.sqrt()
    }

    /// `Sigma_b^{-1} = H - sigma2_theta H c c^T H`.
    pub fn sigma_b_inv(&self) -> DMatrix<f64> {
        let hc = self.h.as_matrix() * &self.c_tilde;
        self.h.as_matrix() - &hc * hc.transpose() * self.sigma2_theta
    }

    /// Conditional mean of `theta_hat` given `b`.
    pub fn mu_theta(&self, b: &DVector<f64>) -> f64 {
        self.sigma2_theta
            * (self.theta / self.nu + self.c_tilde.dot(&self.k) + self.c_tilde.dot(&(self.h.as_matrix() * b)))
    }

    /// `P(theta_hat <= x | b) = Phi(g1^T b + g2)`.
    pub fn functional(&self, x: f64) -> LinearGaussianFunctional {
        let s = self.sigma_theta();
        let g1 = -(self.h.as_matrix() * &self.c_tilde) * s;
        let g2 = x / s - s * (self.theta / self.nu + self.c_tilde.dot(&self.k));
        LinearGaussianFunctional { g1, g2 }
    }

    /// `tau = sigma_theta H c_tilde`.
    pub fn tau(&self) -> DVector<f64> {
        self.h.as_matrix() * &self.c_tilde * self.sigma_theta()
    }

    /// `Delta = sigma_theta (theta / nu + c_tilde^T k - theta_hat / sigma2_theta)`.
    pub fn delta(&self) -> f64 {
        self.sigma_theta() * (self.theta / self.nu + self.c_tilde.dot(&self.k) - self.theta_hat / self.sigma2_theta)
    }

    /// The same law at a different hypothesised `theta`.
    pub fn at(&self, theta: f64) -> Self {
        let mut out = self.clone();
        out.mu_b = &self.mu_b + &self.c_tilde * (theta - self.theta);
        out.theta = theta;
        out
    }
}

/// Proposal law for sampling `b` once and reweighting to every `(eta, theta)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceLaw {
    pub mu: DVector<f64>,
    /// `H^{-1}`
    pub sigma: SymMatrix,
    pub h: SymMatrix,
}

/// `mu_bar = -H^{-1} Q_2^T Omega^{-1} (r + s - X^T X_M beta_hat_M)`, `Sigma_bar = H^{-1}`.
pub fn reference_law(rec: &SelectionRecord) -> Result<ReferenceLaw> {
    let x = rec.data.x();
    let omega = rec.spec.omega(x)?;
    let q2 = rec.q2();
    let omega_inv_q2 = cholesky(omega.as_matrix())?.solve_mat(&q2);
    let (h, h_inv) = invert_h(q2.transpose() * &omega_inv_q2)?;
    let v = &rec.r + &rec.s + rec.q1() * &rec.beta_hat;
    let mu = -(h_inv.as_matrix() * (omega_inv_q2.transpose() * v));
    Ok(ReferenceLaw { mu, sigma: h_inv, h })
}

/// `ln wbar(b) = (b^T tau)^2 / 2 + Delta b^T tau`, or `-inf` outside the orthant.
pub fn log_importance_weight(b: &DVector<f64>, tau: &DVector<f64>, delta: f64) -> f64 {
    if b.iter().any(|&v| !(v > 0.0)) {
        return f64::NEG_INFINITY;
    }
    let x = b.dot(tau);
    0.5 * x * x + delta * x
}

/// `wbar(b)`, the density ratio (up to a constant) of the conditional law at
/// `(eta, theta)` over the reference law.
pub fn importance_weight(b: &DVector<f64>, tau: &DVector<f64>, delta: f64) -> f64 {
    log_importance_weight(b, tau, delta).exp()
}
