use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inference::Method;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    Simulate,
    Infer,
    CompareSamplers,
    Mle,
}

/// Feature covariance of the simulated design.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CovarianceKind {
    /// `Sigma_ij = r^|i-j|`
    Ar,
    /// `Sigma_ij = r + (1 - r) 1{i = j}`
    Equi,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LambdaRule {
    Theory,
    Cv,
}

/// Every knob of a run. Field names double as config-file keys.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenario: Scenario,
    pub n: usize,
    pub p: usize,
    pub covariance: CovarianceKind,
    pub covariance_param: f64,
    pub c0: f64,
    pub sparsity: usize,
    pub rho: f64,
    pub lambda: LambdaRule,
    pub alpha: f64,
    pub repetitions: usize,
    /// Total RQMC points per inference.
    pub rqmc_n: usize,
    /// Replicates the RQMC points are split into for standard errors.
    pub batches: usize,
    /// Independent randomizations in the sampler comparison.
    pub replicates: usize,
    /// RQMC points per randomization in the sampler comparison.
    pub compare_n: usize,
    /// Hit-and-run draws relative to `compare_n`.
    pub hit_and_run_factor: usize,
    pub burn_in: usize,
    pub bootstrap: usize,
    pub methods: Vec<Method>,
    pub cv_folds: usize,
    /// Add wall-clock columns (makes output non-reproducible).
    pub timing: bool,
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            scenario: Scenario::Simulate,
            n: 300,
            p: 100,
            covariance: CovarianceKind::Ar,
            covariance_param: 0.9,
            c0: 0.6,
            sparsity: 10,
            rho: 0.8,
            lambda: LambdaRule::Theory,
            alpha: 0.05,
            repetitions: 200,
            rqmc_n: 256,
            batches: 8,
            replicates: 50,
            compare_n: 1 << 12,
            hit_and_run_factor: 5,
            burn_in: 20,
            bootstrap: 1000,
            methods: vec![Method::Splitting, Method::CdfSov, Method::MleSov],
            cv_folds: 5,
            timing: false,
            seed: 0,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidInput(m));
        if self.n < 2 || self.p < 1 {
            return bad(format!("need n >= 2 and p >= 1, got n={}, p={}", self.n, self.p));
        }
        if self.sparsity > self.p {
            return bad(format!("sparsity {} exceeds p={}", self.sparsity, self.p));
        }
        if !(self.rho > 0.0 && self.rho < 1.0) {
            return bad(format!("rho must lie in (0, 1), got {}", self.rho));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad(format!("alpha must lie in (0, 1), got {}", self.alpha));
        }
        if !(self.covariance_param > -1.0 && self.covariance_param < 1.0) {
            return bad(format!("covariance parameter must lie in (-1, 1), got {}", self.covariance_param));
        }
        if !(self.c0 >= 0.0) {
            return bad(format!("signal strength must be non-negative, got {}", self.c0));
        }
        if self.batches < 2 || self.replicates < 2 {
            return bad("batches and replicates must both be at least 2".into());
        }
        let per = self.rqmc_n / self.batches;
        if per == 0 || !per.is_power_of_two() || per * self.batches != self.rqmc_n {
            return bad(format!(
                "rqmc_n={} must split into {} power-of-two batches",
                self.rqmc_n, self.batches
            ));
        }
        if !self.compare_n.is_power_of_two() {
            return bad(format!("compare_n must be a power of two, got {}", self.compare_n));
        }
        if self.cv_folds < 2 {
            return bad("cv_folds must be at least 2".into());
        }
        if self.hit_and_run_factor == 0 || self.bootstrap == 0 {
            return bad("hit_and_run_factor and bootstrap must be positive".into());
        }
        Ok(())
    }

    /// Points per RQMC batch.
    pub fn batch_size(&self) -> usize {
        self.rqmc_n / self.batches
    }
}
