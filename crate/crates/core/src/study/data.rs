//! Synthetic regression data for the simulation study.

use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;
use rand::Rng;
use rand_distr::StandardNormal;

use super::config::{CovarianceKind, ExperimentConfig};
use crate::error::Result;
use crate::num::linalg::cholesky;
use crate::selection::{estimate_sigma2, Dataset};
use crate::seeds;

/// Feature covariance for the configured kind and parameter.
pub fn feature_covariance(kind: CovarianceKind, r: f64, p: usize) -> DMatrix<f64> {
    DMatrix::from_fn(p, p, |i, j| match kind {
        CovarianceKind::Ar => r.powi((i as i32 - j as i32).abs()),
        CovarianceKind::Equi => {
            if i == j {
                1.0
            } else {
                r
            }
        }
    })
}

/// One simulated problem.
#[derive(Debug, Clone)]
pub struct SimulatedData {
    pub data: Dataset,
    pub beta: DVector<f64>,
}

/// Signal magnitude `sqrt(2 c0 ln p / n)`.
pub fn signal_size(c0: f64, p: usize, n: usize) -> f64 {
    (2.0 * c0 * (p as f64).ln() / n as f64).sqrt()
}

/// Draw `x_i ~ N(0, Sigma_X)`, a sparse `beta` with random support and signs,
/// and `y = X beta + N(0, 1)`. The attached noise variance is the full-data
/// least-squares estimate when `n > p`, otherwise the true value 1.
pub fn simulate(cfg: &ExperimentConfig, rep: u64) -> Result<SimulatedData> {
    let (n, p) = (cfg.n, cfg.p);
    let l = cholesky(&feature_covariance(cfg.covariance, cfg.covariance_param, p))?;
    let mut rng = seeds::rng(seeds::derive(cfg.seed, &[seeds::stream::DATA, rep]));
    let z = DMatrix::from_fn(n, p, |_, _| rng.sample::<f64, _>(StandardNormal));
    let x = z * l.l().transpose();

    let mut srng = seeds::rng(seeds::derive(cfg.seed, &[seeds::stream::SIGNS, rep]));
    let size = signal_size(cfg.c0, p, n);
    let mut beta = DVector::zeros(p);
    for j in sample(&mut srng, p, cfg.sparsity).into_iter() {
        beta[j] = if srng.random::<bool>() { size } else { -size };
    }

    let mut nrng = seeds::rng(seeds::derive(cfg.seed, &[seeds::stream::NOISE, rep]));
    let y = &x * &beta + DVector::from_fn(n, |_, _| nrng.sample::<f64, _>(StandardNormal));
    let raw = Dataset::new(x, y, None)?;
    let sigma2 = if n > p { estimate_sigma2(&raw)? } else { 1.0 };
    Ok(SimulatedData { data: raw.with_sigma2(sigma2)?, beta })
}
