//! Randomized lasso selection: data containers, the solver, KKT extraction
//! into a [`SelectionRecord`], data carving and tuning-parameter rules.

mod carving;
mod lasso;
mod tuning;

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::num::linalg::{cholesky, SymMatrix};

pub use carving::{carve_split, select_by_carving, CarveSplit};
pub use lasso::{gram_objective, lasso_gram, support, LassoOptions};
pub use tuning::{default_cv_grid, lambda_cv, lambda_theory};

/// Design, response and (optionally) a known noise variance.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    x: DMatrix<f64>,
    y: DVector<f64>,
    sigma2: Option<f64>,
}

impl Dataset {
    pub fn new(x: DMatrix<f64>, y: DVector<f64>, sigma2: Option<f64>) -> Result<Self> {
        let (n, p) = x.shape();
        if n < 2 || p < 1 {
            return Err(Error::InvalidInput(format!("need n >= 2 and p >= 1, got {n}x{p}")));
        }
        if y.len() != n {
            return Err(Error::InvalidInput(format!(
                "design has {n} rows but response has {} entries",
                y.len()
            )));
        }
        if let Some((k, _)) = x.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "design entry ({}, {}) is not finite",
                k % n,
                k / n
            )));
        }
        if let Some(i) = y.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("response entry {i} is not finite")));
        }
        if let Some(s) = sigma2 {
            if !(s > 0.0) || !s.is_finite() {
                return Err(Error::InvalidInput(format!("noise variance must be positive, got {s}")));
            }
        }
        Ok(Self { x, y, sigma2 })
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn sigma2(&self) -> Option<f64> {
        self.sigma2
    }

    pub fn with_sigma2(mut self, sigma2: f64) -> Result<Self> {
        if !(sigma2 > 0.0) || !sigma2.is_finite() {
            return Err(Error::InvalidInput(format!("noise variance must be positive, got {sigma2}")));
        }
        self.sigma2 = Some(sigma2);
        Ok(self)
    }

    /// Rows `idx` as a new dataset.
    pub fn subset(&self, idx: &[usize]) -> Result<Self> {
        let x = self.x.select_rows(idx);
        let y = DVector::from_fn(idx.len(), |i, _| self.y[idx[i]]);
        Self::new(x, y, self.sigma2)
    }
}

/// Law of the randomization `omega ~ N(0, Omega)`.
#[derive(Debug, Clone, PartialEq)]
pub enum RandomizationSpec {
    /// Arbitrary positive-definite covariance.
    Explicit { omega: SymMatrix },
    /// Selection on a fraction `rho` of the rows, equivalent (asymptotically)
    /// to `Omega = ((1 - rho) / rho) sigma2 X^T X`.
    Carving { rho: f64, sigma2: f64 },
}

impl RandomizationSpec {
    pub fn carving(rho: f64, sigma2: f64) -> Result<Self> {
        if !(rho > 0.0 && rho < 1.0) {
            return Err(Error::InvalidInput(format!("carving fraction must lie in (0, 1), got {rho}")));
        }
        if !(sigma2 > 0.0) || !sigma2.is_finite() {
            return Err(Error::InvalidInput(format!("noise variance must be positive, got {sigma2}")));
        }
        Ok(Self::Carving { rho, sigma2 })
    }

    /// `kappa` with `Omega = kappa^{-1} sigma2 X^T X`, when the spec has that form.
    pub fn kappa(&self) -> Option<f64> {
        match self {
            Self::Carving { rho, .. } => Some(rho / (1.0 - rho)),
            Self::Explicit { .. } => None,
        }
    }

    /// The covariance `Omega` for design `x`.
    pub fn omega(&self, x: &DMatrix<f64>) -> Result<SymMatrix> {
        match self {
            Self::Explicit { omega } => {
                if omega.dim() != x.ncols() {
                    return Err(Error::InvalidInput("randomization covariance has wrong size".into()));
                }
                Ok(omega.clone())
            }
            Self::Carving { rho, sigma2 } => {
                SymMatrix::new(x.transpose() * x * ((1.0 - rho) / rho * sigma2))
            }
        }
    }
}

/// Which linear statistic `A_M Y` targets the selected coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TargetConvention {
    /// `A_M = X_M^+`, targeting `X_M^+ X beta`.
    #[default]
    Submodel,
    /// `A_M` = rows `M` of `(X^T X)^{-1} X^T`; needs full column rank.
    FullModel,
}

/// Everything inference needs about one selection event.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectionRecord {
    pub data: Arc<Dataset>,
    /// Selected variables, increasing.
    pub active: Vec<usize>,
    /// Diagonal of `D`: signs of the selected lasso coefficients.
    pub signs: DVector<f64>,
    /// Magnitudes of the selected lasso coefficients (all positive).
    pub b: DVector<f64>,
    /// Lasso solution on all `p` coordinates.
    pub beta_lambda: DVector<f64>,
    /// Target statistic `beta_hat_M = A_M Y`.
    pub beta_hat: DVector<f64>,
    /// `r = X^T (X_M beta_hat_M - Y)`.
    pub r: DVector<f64>,
    /// Subgradient, with `s_M = lambda * sign`.
    pub s: DVector<f64>,
    /// Realized randomization.
    pub omega: DVector<f64>,
    pub lambda: f64,
    pub spec: RandomizationSpec,
    /// Noise variance used for inference.
    pub sigma2: f64,
    /// Rows not used for selection (carving only).
    pub holdout: Option<Vec<usize>>,
    pub target: TargetConvention,
}

impl SelectionRecord {
    pub fn d(&self) -> usize {
        self.active.len()
    }

    /// `X_M`.
    pub fn x_active(&self) -> DMatrix<f64> {
        self.data.x().select_columns(&self.active)
    }

    /// `Q_1 = -X^T X_M`.
    pub fn q1(&self) -> DMatrix<f64> {
        -(self.data.x().transpose() * self.x_active())
    }

    /// `Q_2 = X^T X_M D`.
    pub fn q2(&self) -> DMatrix<f64> {
        let mut q = self.data.x().transpose() * self.x_active();
        for (j, sgn) in self.signs.iter().enumerate() {
            q.column_mut(j).scale_mut(*sgn);
        }
        q
    }

    /// Covariance of the target statistic, `sigma2 A_M A_M^T`.
    pub fn target_cov(&self) -> Result<SymMatrix> {
        let x = self.data.x();
        let m = match self.target {
            TargetConvention::Submodel => {
                let xm = self.x_active();
                cholesky(&(xm.transpose() * &xm))?.inverse()
            }
            TargetConvention::FullModel => {
                let inv = cholesky(&(x.transpose() * x))?.inverse();
                DMatrix::from_fn(self.d(), self.d(), |i, j| inv[(self.active[i], self.active[j])])
            }
        };
        SymMatrix::new(m * self.sigma2)
    }

    /// Right-hand side of the KKT map `Q_1 beta_hat_M + Q_2 b + r + s`.
    pub fn reconstruct_omega(&self) -> DVector<f64> {
        self.q1() * &self.beta_hat + self.q2() * &self.b + &self.r + &self.s
    }
}

/// Minimiser of `1/2 ||Y - X beta||^2 + lambda ||beta||_1 - omega^T beta`.
pub fn solve_randomized_lasso(data: &Dataset, lambda: f64, omega: &DVector<f64>) -> Result<DVector<f64>> {
    if omega.len() != data.p() {
        return Err(Error::InvalidInput("randomization has wrong length".into()));
    }
    let a = data.x().transpose() * data.x();
    let c = data.x().transpose() * data.y() + omega;
    lasso_gram(&a, &c, lambda, None, LassoOptions::default())
}

/// Target statistic `A_M Y` for the given convention.
pub fn target_statistic(data: &Dataset, active: &[usize], target: TargetConvention) -> Result<DVector<f64>> {
    let x = data.x();
    match target {
        TargetConvention::Submodel => {
            let xm = x.select_columns(active);
            let g = cholesky(&(xm.transpose() * &xm)).map_err(|_| {
                Error::RankDeficient(format!("selected design with {} columns is rank deficient", active.len()))
            })?;
            Ok(g.solve(&(xm.transpose() * data.y())))
        }
        TargetConvention::FullModel => {
            let g = cholesky(&(x.transpose() * x))
                .map_err(|_| Error::RankDeficient("full design is rank deficient".into()))?;
            let full = g.solve(&(x.transpose() * data.y()));
            Ok(DVector::from_fn(active.len(), |i, _| full[active[i]]))
        }
    }
}

/// Build the selection record from a solved randomized lasso.
pub fn extract_kkt(
    data: Arc<Dataset>,
    lambda: f64,
    omega: &DVector<f64>,
    beta_lambda: &DVector<f64>,
    spec: RandomizationSpec,
    target: TargetConvention,
) -> Result<SelectionRecord> {
    let p = data.p();
    if omega.len() != p || beta_lambda.len() != p {
        return Err(Error::InvalidInput("randomization or coefficients have wrong length".into()));
    }
    let active = support(beta_lambda);
    if active.is_empty() {
        return Err(Error::EmptyModel);
    }
    let sigma2 = match &spec {
        RandomizationSpec::Carving { sigma2, .. } => *sigma2,
        RandomizationSpec::Explicit { .. } => match data.sigma2() {
            Some(s) => s,
            None => estimate_sigma2(&data)?,
        },
    };
    let signs = DVector::from_fn(active.len(), |i, _| beta_lambda[active[i]].signum());
    let b = DVector::from_fn(active.len(), |i, _| beta_lambda[active[i]].abs());
    let beta_hat = target_statistic(&data, &active, target)?;
    let x = data.x();
    let xm = x.select_columns(&active);
    let r = x.transpose() * (&xm * &beta_hat - data.y());
    let grad = x.transpose() * (x * beta_lambda - data.y());
    let mut s = omega - grad;
    for (i, &j) in active.iter().enumerate() {
        s[j] = lambda * signs[i];
    }
    let record = SelectionRecord {
        data,
        active,
        signs,
        b,
        beta_lambda: beta_lambda.clone(),
        beta_hat,
        r,
        s,
        omega: omega.clone(),
        lambda,
        spec,
        sigma2,
        holdout: None,
        target,
    };
    check_record(&record)?;
    Ok(record)
}

/// Verify the subgradient bounds and the KKT map identity.
pub fn check_record(rec: &SelectionRecord) -> Result<()> {
    let slack = 1e-8 * rec.lambda.max(1.0);
    for j in 0..rec.data.p() {
        if !rec.active.contains(&j) && rec.s[j].abs() > rec.lambda + slack {
            return Err(Error::NoConvergence { iterations: 0, residual: rec.s[j].abs() - rec.lambda });
        }
    }
    let back = rec.reconstruct_omega();
    let scale = 1.0 + (rec.data.x().transpose() * rec.data.y()).amax() + rec.omega.amax();
    let err = (back - &rec.omega).amax();
    if err > 1e-8 * scale {
        return Err(Error::NoConvergence { iterations: 0, residual: err });
    }
    Ok(())
}

/// `||Y - X (X^T X)^{-1} X^T Y||^2 / (n - p)`.
pub fn estimate_sigma2(data: &Dataset) -> Result<f64> {
    let (n, p) = (data.n(), data.p());
    if n <= p {
        return Err(Error::RankDeficient(format!("need n > p to estimate the noise, got n={n}, p={p}")));
    }
    let x = data.x();
    let g = cholesky(&(x.transpose() * x))
        .map_err(|_| Error::RankDeficient("design is rank deficient".into()))?;
    let beta = g.solve(&(x.transpose() * data.y()));
    let resid = data.y() - x * beta;
    Ok(resid.norm_squared() / (n - p) as f64)
}
