//! Hit-and-run MCMC for orthant-truncated Gaussians.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;

use crate::error::{Error, Result};
use crate::num::linalg::{cholesky, SymMatrix};
use crate::num::special::trunc_norm_quantile;
use crate::seeds;
use crate::sov::OrthantGaussian;

/// Chain settings.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HitAndRunConfig {
    /// Retained states.
    pub samples: usize,
    pub burn_in: usize,
    /// Move along leading principal components as well as the axes.
    pub use_pcs: bool,
    pub seed: u64,
}

impl HitAndRunConfig {
    pub fn new(samples: usize, seed: u64) -> Self {
        Self { samples, burn_in: 20, use_pcs: true, seed }
    }
}

/// `argmin_{b >= 0} (b - mu)^T Sigma^{-1} (b - mu)` by cyclic coordinate
/// descent on the precision matrix.
pub fn find_mode(og: &OrthantGaussian) -> Result<DVector<f64>> {
    let mu = og.mean();
    if mu.iter().all(|&v| v > 0.0) {
        return Ok(mu.clone());
    }
    let prec = cholesky(og.covariance().as_matrix())?.inverse();
    let d = mu.len();
    let mut b = mu.map(|v| v.max(0.0));
    let scale = mu.amax().max(1.0);
    for _ in 0..100_000 {
        let mut change = 0.0_f64;
        for j in 0..d {
            let mut s = 0.0;
            for k in 0..d {
                if k != j {
                    s += prec[(j, k)] * (b[k] - mu[k]);
                }
            }
            let new = (mu[j] - s / prec[(j, j)]).max(0.0);
            change = change.max((new - b[j]).abs());
            b[j] = new;
        }
        if change <= 1e-14 * scale {
            return Ok(b);
        }
    }
    Err(Error::NoConvergence { iterations: 100_000, residual: f64::NAN })
}

/// Unit eigenvectors of `Sigma` for the fewest leading eigenvalues whose share
/// of the trace exceeds one half.
pub fn pc_directions(sigma: &SymMatrix) -> Vec<DVector<f64>> {
    let eig = SymmetricEigen::new(sigma.as_matrix().clone());
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let total: f64 = eig.eigenvalues.iter().sum();
    let mut acc = 0.0;
    let mut out = Vec::new();
    for &i in &order {
        acc += eig.eigenvalues[i];
        out.push(eig.eigenvectors.column(i).normalize());
        if acc / total > 0.5 {
            break;
        }
    }
    out
}

/// Retained states of one chain, `samples x d`.
#[derive(Debug, Clone, PartialEq)]
pub struct Chain {
    pub states: Vec<DVector<f64>>,
}

/// Precomputed pieces of a hit-and-run sampler: the mode (starting state),
/// the direction set and the precision matrix. Building these is kept apart
/// from running chains so that timing can exclude it.
#[derive(Debug, Clone)]
pub struct HitAndRun {
    mu: DVector<f64>,
    prec: DMatrix<f64>,
    dirs: Vec<DVector<f64>>,
    pdirs: Vec<DVector<f64>>,
    curv: Vec<f64>,
    start: DVector<f64>,
}

impl HitAndRun {
    pub fn new(og: &OrthantGaussian, use_pcs: bool) -> Result<Self> {
        let d = og.dim();
        let mu = og.mean().clone();
        let prec = cholesky(og.covariance().as_matrix())?.inverse();
        let mut dirs: Vec<DVector<f64>> = (0..d)
            .map(|j| {
                let mut e = DVector::zeros(d);
                e[j] = 1.0;
                e
            })
            .collect();
        if use_pcs {
            dirs.extend(pc_directions(og.covariance()));
        }
        let pdirs: Vec<DVector<f64>> = dirs.iter().map(|v| &prec * v).collect();
        let curv = dirs.iter().zip(&pdirs).map(|(v, pv)| v.dot(pv)).collect();
        let mut start = find_mode(og)?;
        // a mode on the boundary is nudged inside so every state is in the open orthant
        let floor = 1e-12 * mu.amax().max(1.0);
        start.iter_mut().for_each(|v| *v = v.max(floor));
        Ok(Self { mu, prec, dirs, pdirs, curv, start })
    }

    pub fn directions(&self) -> &[DVector<f64>] {
        &self.dirs
    }

    /// Run one chain. Each move picks a direction uniformly, restricts the
    /// Gaussian to the feasible chord, and draws exactly from that 1-D law.
    pub fn run(&self, samples: usize, burn_in: usize, seed: u64) -> Chain {
        let d = self.mu.len();
        let mut x = self.start.clone();
        let mut resid: DVector<f64> = &self.prec * (&x - &self.mu);
        let mut rng = seeds::rng(seeds::derive(seed, &[seeds::stream::CHAIN]));
        let mut states = Vec::with_capacity(samples);
        for step in 0..burn_in + samples {
            let k = rng.random_range(0..self.dirs.len());
            let v = &self.dirs[k];
            let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
            for i in 0..d {
                if v[i] > 0.0 {
                    lo = lo.max(-x[i] / v[i]);
                } else if v[i] < 0.0 {
                    hi = hi.min(-x[i] / v[i]);
                }
            }
            let sd = 1.0 / self.curv[k].sqrt();
            let m = -v.dot(&resid) / self.curv[k];
            let u: f64 = rng.random();
            let t = (m + sd * trunc_norm_quantile((lo - m) / sd, (hi - m) / sd, u)).clamp(lo, hi);
            x.axpy(t, v, 1.0);
            for xi in x.iter_mut() {
                if !(*xi > 0.0) {
                    *xi = f64::MIN_POSITIVE;
                }
            }
            resid.axpy(t, &self.pdirs[k], 1.0);
            if step >= burn_in {
                states.push(x.clone());
            }
        }
        Chain { states }
    }
}

/// Hit-and-run chain started at the mode.
pub fn hit_and_run_sample(og: &OrthantGaussian, cfg: &HitAndRunConfig) -> Result<Chain> {
    Ok(HitAndRun::new(og, cfg.use_pcs)?.run(cfg.samples, cfg.burn_in, cfg.seed))
}

/// Sample mean of the retained states.
pub fn chain_mean(chain: &Chain) -> DVector<f64> {
    let d = chain.states.first().map_or(0, |s| s.len());
    let mut m = DVector::zeros(d);
    for s in &chain.states {
        m += s;
    }
    m / chain.states.len().max(1) as f64
}
