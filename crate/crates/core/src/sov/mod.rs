//! Separation-of-variables (SOV) integration over the positive orthant of a
//! Gaussian: variable reordering, the cube-to-orthant transform, orthant
//! probabilities, pre-integrated CDF estimates and truncated moments.

mod reorder;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::num::linalg::{cholesky, symmetrize, SymMatrix};
use crate::num::special::{
    log_norm_sf, norm_cdf, preintegrate_with_tail, trunc_norm_draw_above,
};
use crate::par;
use crate::qmc::{replicate_mean_stderr, PointBatch, ReplicateSet};

pub use reorder::gibson_reorder;

/// Cube coordinates are clamped to `[EPS_U, 1 - EPS_U]` before inversion.
pub const EPS_U: f64 = 1.0 / (1u64 << 53) as f64;

/// `N(mu, Sigma)` restricted to the positive orthant, together with the
/// variable ordering used for sequential sampling.
#[derive(Debug, Clone, PartialEq)]
pub struct OrthantGaussian {
    mu: DVector<f64>,
    sigma: SymMatrix,
    /// `perm[k]` is the original index of the variable placed at position `k`.
    perm: Vec<usize>,
    mu_perm: DVector<f64>,
    /// Cholesky factor of the permuted covariance.
    l: DMatrix<f64>,
    /// Row `k` of `l` holds `-L_kj / L_kk` for `j < k`, packed row-major.
    slopes: Vec<f64>,
}

fn pack_rows(l: &DMatrix<f64>) -> Vec<f64> {
    let d = l.nrows();
    let mut out = Vec::with_capacity(d * (d - 1) / 2);
    for k in 0..d {
        out.extend((0..k).map(|j| -l[(k, j)] / l[(k, k)]));
    }
    out
}

impl OrthantGaussian {
    /// Natural variable order.
    pub fn new(mu: DVector<f64>, sigma: SymMatrix) -> Result<Self> {
        let perm: Vec<usize> = (0..mu.len()).collect();
        Self::with_permutation(mu, sigma, perm)
    }

    /// Use a caller-supplied ordering.
    pub fn with_permutation(mu: DVector<f64>, sigma: SymMatrix, perm: Vec<usize>) -> Result<Self> {
        let d = mu.len();
        if d == 0 || sigma.dim() != d {
            return Err(Error::InvalidInput(format!(
                "mean has length {d} but covariance is {0}x{0}",
                sigma.dim()
            )));
        }
        if mu.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("mean has non-finite entries".into()));
        }
        let mut seen = vec![false; d];
        for &p in &perm {
            if p >= d || std::mem::replace(&mut seen[p], true) {
                return Err(Error::InvalidInput("ordering is not a permutation".into()));
            }
        }
        if perm.len() != d {
            return Err(Error::InvalidInput("ordering is not a permutation".into()));
        }
        let s = sigma.as_matrix();
        let permuted = DMatrix::from_fn(d, d, |i, j| s[(perm[i], perm[j])]);
        let l = cholesky(&permuted)?.l().clone();
        let mu_perm = DVector::from_fn(d, |i, _| mu[perm[i]]);
        let slopes = pack_rows(&l);
        Ok(Self { mu, sigma, perm, mu_perm, l, slopes })
    }

    pub(crate) fn from_parts(
        mu: DVector<f64>,
        sigma: SymMatrix,
        perm: Vec<usize>,
        l: DMatrix<f64>,
    ) -> Self {
        let mu_perm = DVector::from_fn(mu.len(), |i, _| mu[perm[i]]);
        let slopes = pack_rows(&l);
        Self { mu, sigma, perm, mu_perm, l, slopes }
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mu
    }

    pub fn covariance(&self) -> &SymMatrix {
        &self.sigma
    }

    pub fn permutation(&self) -> &[usize] {
        &self.perm
    }

    /// Mean in the reordered frame.
    pub fn permuted_mean(&self) -> &DVector<f64> {
        &self.mu_perm
    }

    /// Cholesky factor of the reordered covariance.
    pub fn cholesky_factor(&self) -> &DMatrix<f64> {
        &self.l
    }

    /// Move an original-order vector into the reordered frame.
    pub fn to_permuted(&self, v: &DVector<f64>) -> DVector<f64> {
        DVector::from_fn(self.dim(), |i, _| v[self.perm[i]])
    }

    /// Move a reordered-frame vector back to the original order.
    pub fn from_permuted(&self, v: &[f64]) -> DVector<f64> {
        let mut out = DVector::zeros(self.dim());
        for (k, &p) in self.perm.iter().enumerate() {
            out[p] = v[k];
        }
        out
    }

    /// Sequential SOV sweep for one cube point `u`. Fills `a` (all `d`
    /// truncation points) and `z` (first `n_draw` coordinates) and returns
    /// `sum_k ln(1 - Phi(a_k))` over the drawn coordinates.
    #[inline]
    fn sweep(&self, u: &[f64], n_draw: usize, z: &mut [f64], a: &mut [f64]) -> f64 {
        let d = self.dim();
        // tail probabilities are multiplied and only logged on rescaling
        let (mut prod, mut log_w) = (1.0_f64, 0.0);
        let mut start = 0;
        for k in 0..d {
            let row = &self.slopes[start..start + k];
            start += k;
            let ak = row.iter().zip(&z[..k]).fold(-self.mu_perm[k] / self.l[(k, k)], |s, (c, zj)| s + c * zj);
            a[k] = ak;
            if k < n_draw {
                let (zk, sf) = trunc_norm_draw_above(ak, u[k].clamp(EPS_U, 1.0 - EPS_U));
                z[k] = zk;
                if sf > 0.0 {
                    prod *= sf;
                    if prod < 1e-200 {
                        log_w += prod.ln();
                        prod = 1.0;
                    }
                } else {
                    log_w += log_norm_sf(ak);
                }
            }
        }
        log_w + prod.ln()
    }

    fn check_batch(&self, batch_dim: usize, need: usize) -> Result<()> {
        if batch_dim < need {
            return Err(Error::InvalidInput(format!(
                "point set has dimension {batch_dim}, at least {need} required"
            )));
        }
        Ok(())
    }

    /// Transform a point batch into orthant samples.
    pub fn sov_transform(&self, batch: &PointBatch) -> Result<SovBatch> {
        let d = self.dim();
        self.check_batch(batch.dim(), d)?;
        let n = batch.len();
        let mut z = vec![0.0; n * d];
        let mut a = vec![0.0; n * d];
        let mut b = vec![0.0; n * d];
        let mut log_w = vec![0.0; n];
        for i in 0..n {
            let zi = &mut z[i * d..(i + 1) * d];
            let ai = &mut a[i * d..(i + 1) * d];
            log_w[i] = self.sweep(batch.point(i), d, zi, ai);
            let bi = &mut b[i * d..(i + 1) * d];
            for k in 0..d {
                // b_k - mu_k = sum_j L_kj z_j, and the truncation gives
                // b_k = L_kk (z_k - a_k) exactly, which stays positive.
                let pos = self.perm[k];
                bi[pos] = (self.l[(k, k)] * (zi[k] - ai[k])).max(f64::MIN_POSITIVE);
            }
        }
        Ok(SovBatch { dim: d, z, a, b, log_w })
    }

    /// Scan only the first `d - 1` coordinates of each point, returning the
    /// quantities needed to integrate out the last coordinate analytically.
    /// `slopes` (reordered frame, `d x m`) are projected on the drawn
    /// coordinates: `proj[i*m + j] = sum_{k<d-1} slopes[(k, j)] z_k`.
    pub fn prefix_scan(&self, batch: &PointBatch, slopes: &DMatrix<f64>) -> Result<PrefixScan> {
        let d = self.dim();
        self.check_batch(batch.dim(), d - 1)?;
        if slopes.nrows() != d {
            return Err(Error::InvalidInput("slope matrix must have d rows".into()));
        }
        let m = slopes.ncols();
        let n = batch.len();
        let mut out = PrefixScan {
            width: m,
            log_w_head: vec![0.0; n],
            a_last: vec![0.0; n],
            proj: vec![0.0; n * m],
        };
        let mut z = vec![0.0; d];
        let mut a = vec![0.0; d];
        for i in 0..n {
            out.log_w_head[i] = self.sweep(batch.point(i), d - 1, &mut z, &mut a);
            out.a_last[i] = a[d - 1];
            for j in 0..m {
                let col = slopes.column(j);
                out.proj[i * m + j] = (0..d - 1).map(|k| col[k] * z[k]).sum();
            }
        }
        Ok(out)
    }
}

/// Per-sample output of [`OrthantGaussian::prefix_scan`].
#[derive(Debug, Clone, PartialEq)]
pub struct PrefixScan {
    pub width: usize,
    /// `sum_{k<d-1} ln(1 - Phi(a_k))`
    pub log_w_head: Vec<f64>,
    /// Truncation point of the last coordinate.
    pub a_last: Vec<f64>,
    pub proj: Vec<f64>,
}

/// Orthant samples produced from one point batch.
#[derive(Debug, Clone, PartialEq)]
pub struct SovBatch {
    dim: usize,
    z: Vec<f64>,
    a: Vec<f64>,
    b: Vec<f64>,
    log_w: Vec<f64>,
}

impl SovBatch {
    pub fn len(&self) -> usize {
        self.log_w.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_w.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Standardised draws in the reordered frame.
    pub fn z(&self, i: usize) -> &[f64] {
        &self.z[i * self.dim..(i + 1) * self.dim]
    }

    /// Truncation points in the reordered frame.
    pub fn a(&self, i: usize) -> &[f64] {
        &self.a[i * self.dim..(i + 1) * self.dim]
    }

    /// Orthant sample `b = L z + mu` in the original variable order.
    pub fn b(&self, i: usize) -> &[f64] {
        &self.b[i * self.dim..(i + 1) * self.dim]
    }

    pub fn log_weight(&self, i: usize) -> f64 {
        self.log_w[i]
    }

    pub fn weight(&self, i: usize) -> f64 {
        self.log_w[i].exp()
    }
}

/// Monte Carlo estimate with a replicate-based standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub stderr: f64,
}

impl Estimate {
    fn from_replicates(values: &[f64]) -> Result<Self> {
        let (value, stderr) = replicate_mean_stderr(values)?;
        Ok(Self { value, stderr })
    }
}

/// `c^T x + c0` for Gaussian `x`, as it enters `Phi(g1^T b + g2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearGaussianFunctional {
    /// Slope on `b`, original variable order.
    pub g1: DVector<f64>,
    pub g2: f64,
}

impl LinearGaussianFunctional {
    pub fn new(g1: DVector<f64>, g2: f64) -> Result<Self> {
        if g1.iter().any(|v| !v.is_finite()) || !g2.is_finite() {
            return Err(Error::InvalidInput("functional has non-finite entries".into()));
        }
        Ok(Self { g1, g2 })
    }

    /// Coefficients on `z` in the reordered frame: `(L^T g1_pi, g2 + g1^T mu)`.
    pub fn reduce(&self, og: &OrthantGaussian) -> (DVector<f64>, f64) {
        let g1p = og.to_permuted(&self.g1);
        (og.cholesky_factor().transpose() * g1p, self.g2 + self.g1.dot(og.mean()))
    }
}

fn check_reps(og: &OrthantGaussian, reps: &ReplicateSet) -> Result<()> {
    if reps.replicates() < 2 {
        return Err(Error::InsufficientReplicates(reps.replicates()));
    }
    if reps.dim() + 1 < og.dim() {
        return Err(Error::InvalidInput(format!(
            "point set has dimension {}, at least {} required",
            reps.dim(),
            og.dim() - 1
        )));
    }
    Ok(())
}

/// Mean SOV weight of one batch (needs only `d - 1` coordinates).
pub fn orthant_prob_batch(og: &OrthantGaussian, batch: &PointBatch) -> Result<f64> {
    let d = og.dim();
    let scan = og.prefix_scan(batch, &DMatrix::zeros(d, 0))?;
    let total: f64 = scan
        .log_w_head
        .iter()
        .zip(&scan.a_last)
        .map(|(h, a)| (h + log_norm_sf(*a)).exp())
        .sum();
    Ok(total / batch.len() as f64)
}

/// Orthant probability `P(b > 0)` with replicate standard error.
pub fn orthant_prob(og: &OrthantGaussian, reps: &ReplicateSet) -> Result<Estimate> {
    check_reps(og, reps)?;
    let vals = par::map_slice(reps.batches(), |b| orthant_prob_batch(og, b))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    Estimate::from_replicates(&vals)
}

/// Pooled log of the mean SOV weight over every point of every replicate.
pub fn log_orthant_prob(og: &OrthantGaussian, reps: &ReplicateSet) -> Result<f64> {
    let d = og.dim();
    let empty = DMatrix::zeros(d, 0);
    let scans = par::map_slice(reps.batches(), |b| og.prefix_scan(b, &empty))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let log_w: Vec<f64> = scans
        .iter()
        .flat_map(|s| s.log_w_head.iter().zip(&s.a_last).map(|(h, a)| h + log_norm_sf(*a)))
        .collect();
    let top = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !top.is_finite() {
        return Err(Error::DegenerateDenominator);
    }
    let mean = log_w.iter().map(|lw| (lw - top).exp()).sum::<f64>() / log_w.len() as f64;
    Ok(top + mean.ln())
}

/// Weighted average `sum w_i f_i / sum w_i` from log weights, scaled by the
/// largest weight so that uniformly tiny weights do not underflow.
pub(crate) fn weighted_mean(log_w: &[f64], f: impl Fn(usize) -> f64) -> Result<f64> {
    let top = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !top.is_finite() {
        return Err(Error::DegenerateDenominator);
    }
    let (mut num, mut den) = (0.0, 0.0);
    for (i, &lw) in log_w.iter().enumerate() {
        let w = (lw - top).exp();
        if w > 0.0 {
            num += w * f(i);
            den += w;
        }
    }
    Ok(num / den)
}

/// CDF ratio for one batch; see [`cdf_estimate`].
pub fn cdf_estimate_batch(
    og: &OrthantGaussian,
    fnl: &LinearGaussianFunctional,
    batch: &PointBatch,
    preintegrate: bool,
) -> Result<f64> {
    let d = og.dim();
    let (gt, g0) = fnl.reduce(og);
    let value = if preintegrate {
        let scan = og.prefix_scan(batch, &DMatrix::from_column_slice(d, 1, gt.as_slice()))?;
        let g_last = gt[d - 1];
        let (log_w, f): (Vec<f64>, Vec<f64>) = (0..scan.a_last.len())
            .map(|i| {
                let (lw, r) = preintegrate_with_tail(g_last, scan.proj[i] + g0, scan.a_last[i]);
                (scan.log_w_head[i] + lw, r)
            })
            .unzip();
        weighted_mean(&log_w, |i| f[i])?
    } else {
        let sov = og.sov_transform(batch)?;
        let log_w: Vec<f64> = (0..sov.len()).map(|i| sov.log_weight(i)).collect();
        weighted_mean(&log_w, |i| {
            let zi = sov.z(i);
            norm_cdf(gt.iter().zip(zi).map(|(g, z)| g * z).sum::<f64>() + g0)
        })?
    };
    Ok(value.clamp(0.0, 1.0))
}

/// `E[Phi(g1^T b + g2)]` under the orthant-truncated Gaussian, as the mean of
/// per-replicate self-normalised ratios. With `preintegrate`, the last
/// reordered coordinate is integrated analytically and the batch may have
/// dimension `d - 1`; without it, dimension `d` is required.
pub fn cdf_estimate(
    og: &OrthantGaussian,
    fnl: &LinearGaussianFunctional,
    reps: &ReplicateSet,
    preintegrate: bool,
) -> Result<Estimate> {
    check_reps(og, reps)?;
    if fnl.g1.len() != og.dim() {
        return Err(Error::InvalidInput("functional dimension mismatch".into()));
    }
    let vals = par::map_slice(reps.batches(), |b| cdf_estimate_batch(og, fnl, b, preintegrate))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let mut est = Estimate::from_replicates(&vals)?;
    est.value = est.value.clamp(0.0, 1.0);
    Ok(est)
}

/// Self-normalised mean and covariance of the truncated law.
#[derive(Debug, Clone, PartialEq)]
pub struct TruncatedMoments {
    pub mean: DVector<f64>,
    pub cov: SymMatrix,
    /// Replicate standard error of each mean coordinate.
    pub mean_stderr: DVector<f64>,
}

fn batch_moments(og: &OrthantGaussian, batch: &PointBatch) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let d = og.dim();
    let sov = og.sov_transform(batch)?;
    let top = (0..sov.len()).map(|i| sov.log_weight(i)).fold(f64::NEG_INFINITY, f64::max);
    if !top.is_finite() {
        return Err(Error::DegenerateDenominator);
    }
    let w: Vec<f64> = (0..sov.len()).map(|i| (sov.log_weight(i) - top).exp()).collect();
    let wsum: f64 = w.iter().sum();
    let mut mean = DVector::zeros(d);
    for (i, wi) in w.iter().enumerate() {
        for (m, bk) in mean.iter_mut().zip(sov.b(i)) {
            *m += wi * bk;
        }
    }
    mean /= wsum;
    let mut cov = DMatrix::zeros(d, d);
    for (i, wi) in w.iter().enumerate() {
        let c = DVector::from_column_slice(sov.b(i)) - &mean;
        cov.ger(*wi, &c, &c, 1.0);
    }
    cov /= wsum;
    Ok((mean, cov))
}

/// Truncated mean and covariance, averaged over replicates.
pub fn truncated_moments(og: &OrthantGaussian, reps: &ReplicateSet) -> Result<TruncatedMoments> {
    check_reps(og, reps)?;
    let d = og.dim();
    let parts = par::map_slice(reps.batches(), |b| batch_moments(og, b))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let r = parts.len() as f64;
    let mut mean = DVector::zeros(d);
    let mut cov = DMatrix::zeros(d, d);
    for (m, c) in &parts {
        mean += m;
        cov += c;
    }
    mean /= r;
    cov /= r;
    let mut mean_stderr = DVector::zeros(d);
    for k in 0..d {
        let vals: Vec<f64> = parts.iter().map(|(m, _)| m[k]).collect();
        mean_stderr[k] = replicate_mean_stderr(&vals)?.1;
    }
    Ok(TruncatedMoments { mean, cov: SymMatrix::new(symmetrize(&cov))?, mean_stderr })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qmc::{replicate_set, sobol_batch};

    fn og(mu: &[f64], s: &[f64]) -> OrthantGaussian {
        let d = mu.len();
        OrthantGaussian::new(
            DVector::from_column_slice(mu),
            SymMatrix::new(DMatrix::from_row_slice(d, d, s)).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn one_dimensional_chain() {
        let g = og(&[0.0], &[1.0]);
        let mut z = [0.0];
        let mut a = [0.0];
        let lw = g.sweep(&[0.5], 1, &mut z, &mut a);
        assert_eq!(a[0], 0.0);
        assert!((z[0] - 0.674_489_750_196_081_7).abs() < 1e-13);
        assert!((lw.exp() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn samples_are_positive() {
        let g = og(&[-2.0, 0.5, -6.0], &[1.0, 0.8, 0.2, 0.8, 1.0, 0.1, 0.2, 0.1, 2.0]);
        let sov = g.sov_transform(&sobol_batch(3, 256, 5).unwrap()).unwrap();
        for i in 0..sov.len() {
            assert!(sov.b(i).iter().all(|&v| v > 0.0));
            assert!(sov.weight(i) <= 1.0 && sov.weight(i) >= 0.0);
        }
    }

    #[test]
    fn weight_ignores_last_coordinate() {
        let g = og(&[0.3, -0.4], &[1.0, 0.5, 0.5, 2.0]);
        let mut z = [0.0; 2];
        let mut a = [0.0; 2];
        let w1 = g.sweep(&[0.3, 0.1], 2, &mut z, &mut a);
        let w2 = g.sweep(&[0.3, 0.9], 2, &mut z, &mut a);
        assert_eq!(w1, w2);
    }

    #[test]
    fn independent_octant() {
        let g = og(&[0.0; 3], &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]);
        let est = orthant_prob(&g, &replicate_set(3, 256, 8, 1).unwrap()).unwrap();
        assert!((est.value - 0.125).abs() < 1e-12);
    }

    #[test]
    fn sheppard_quadrant() {
        let g = og(&[0.0; 2], &[1.0, 0.5, 0.5, 1.0]);
        let est = orthant_prob(&g, &replicate_set(2, 1024, 8, 3).unwrap()).unwrap();
        assert!((est.value - 1.0 / 3.0).abs() <= 3.0 * est.stderr + 1e-12);
    }

    #[test]
    fn constant_functional() {
        let g = og(&[0.2, -0.1], &[1.0, 0.3, 0.3, 1.5]);
        let f = LinearGaussianFunctional::new(DVector::zeros(2), 0.4).unwrap();
        let reps = replicate_set(2, 64, 4, 9).unwrap();
        for pre in [true, false] {
            for b in reps.batches() {
                let v = cdf_estimate_batch(&g, &f, b, pre).unwrap();
                assert!((v - norm_cdf(0.4)).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn reps_needed_for_stderr() {
        let g = og(&[0.0], &[1.0]);
        assert!(matches!(
            orthant_prob(&g, &replicate_set(1, 8, 1, 0).unwrap()),
            Err(Error::InsufficientReplicates(1))
        ));
    }
}
