//! Confidence intervals by inverting the conditional CDF over a grid of
//! hypothesised values, reusing one set of reference-law samples.

use nalgebra::{DMatrix, DVector};

use super::law::{reference_law, ConditionalLaw};
use super::report::{CoordinateInference, InferenceReport, Method};
use crate::error::{Error, Result};
use crate::num::linalg::cholesky;
use crate::num::special::{norm_cdf, preintegrate_with_tail};
use crate::par;
use crate::qmc::ReplicateSet;
use crate::selection::SelectionRecord;
use crate::sov::{gibson_reorder, PrefixScan};

/// Grid and acceptance controls for interval inversion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CiOptions {
    pub alpha: f64,
    pub grid_points: usize,
    /// Grid half-width in units of the anchor's standard error.
    pub half_width: f64,
    /// Endpoint refinement tolerance in the same units.
    pub refine_tol: f64,
    pub ess_floor: f64,
}

impl Default for CiOptions {
    fn default() -> Self {
        Self { alpha: 0.05, grid_points: 200, half_width: 10.0, refine_tol: 1e-3, ess_floor: 32.0 }
    }
}

/// One weighted evaluation of the conditional CDF.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThetaEval {
    pub p: f64,
    pub stderr: f64,
    pub ess: f64,
}

/// Hold-out least-squares estimates and standard errors for the selected
/// variables, when the record has enough hold-out rows.
pub fn holdout_estimate(rec: &SelectionRecord) -> Result<Option<(DVector<f64>, DVector<f64>)>> {
    let Some(rows) = rec.holdout.as_ref() else { return Ok(None) };
    let d = rec.d();
    if rows.len() <= d {
        return Ok(None);
    }
    let x2 = rec.data.x().select_rows(rows).select_columns(&rec.active);
    let y2 = DVector::from_fn(rows.len(), |i, _| rec.data.y()[rows[i]]);
    let g = cholesky(&(x2.transpose() * &x2))
        .map_err(|_| Error::RankDeficient("hold-out design is rank deficient".into()))?;
    let est = g.solve(&(x2.transpose() * y2));
    let inv = g.inverse();
    let se = DVector::from_fn(d, |j, _| (rec.sigma2 * inv[(j, j)]).sqrt());
    Ok(Some((est, se)))
}

/// Grid anchor and scale for each selected coordinate.
pub fn grid_anchor(rec: &SelectionRecord) -> Result<(DVector<f64>, DVector<f64>)> {
    if let Some(h) = holdout_estimate(rec)? {
        return Ok(h);
    }
    let sigma = rec.target_cov()?;
    let se = DVector::from_fn(rec.d(), |j, _| sigma.as_matrix()[(j, j)].sqrt());
    Ok((rec.beta_hat.clone(), se))
}

/// Invert `theta -> p(theta)` on a grid around `anchor`: the interval is the
/// hull of `{theta : 2 min(p, 1 - p) >= alpha}` with bisection-refined ends.
/// Returns `(lower, upper, stderr at the ends, min ESS inside, monotone)`.
pub(crate) fn invert<F>(eval: F, anchor: f64, scale: f64, opts: &CiOptions) -> (f64, f64, f64, f64, bool)
where
    F: Fn(f64) -> ThetaEval + Sync,
{
    let g = opts.grid_points.max(2);
    let grid: Vec<f64> = (0..g)
        .map(|i| anchor + scale * opts.half_width * (2.0 * i as f64 / (g - 1) as f64 - 1.0))
        .collect();
    let evals = par::map_slice(&grid, |&th| eval(th));
    let accept = |e: &ThetaEval| 2.0 * e.p.min(1.0 - e.p) >= opts.alpha;
    let monotone = evals.windows(2).all(|w| w[1].p <= w[0].p + 1e-12);
    let first = evals.iter().position(accept);
    let last = evals.iter().rposition(accept);
    let (Some(lo), Some(hi)) = (first, last) else {
        // nothing accepted: report the single most compatible grid point
        let best = (0..g)
            .max_by(|&a, &b| {
                let pa = evals[a].p.min(1.0 - evals[a].p);
                let pb = evals[b].p.min(1.0 - evals[b].p);
                pa.total_cmp(&pb)
            })
            .unwrap_or(0);
        return (grid[best], grid[best], evals[best].stderr, evals[best].ess, monotone);
    };
    let tol = opts.refine_tol * scale;
    let refine = |mut inside: f64, mut outside: f64| {
        let mut last_in = eval(inside);
        while (inside - outside).abs() > tol {
            let mid = 0.5 * (inside + outside);
            let e = eval(mid);
            if accept(&e) {
                inside = mid;
                last_in = e;
            } else {
                outside = mid;
            }
        }
        (inside, last_in)
    };
    let (lower, e_lo) = if lo > 0 { refine(grid[lo], grid[lo - 1]) } else { (grid[0], evals[0]) };
    let (upper, e_hi) = if hi + 1 < g { refine(grid[hi], grid[hi + 1]) } else { (grid[g - 1], evals[g - 1]) };
    let min_ess = evals[lo..=hi]
        .iter()
        .map(|e| e.ess)
        .fold(e_lo.ess.min(e_hi.ess), f64::min);
    (lower, upper, e_lo.stderr.max(e_hi.stderr), min_ess, monotone)
}

/// Pooled self-normalised ratio over batches, with the replicate spread of
/// per-batch ratios as standard error and the pooled effective sample size.
pub(crate) fn pooled_ratio(batches: &[(Vec<f64>, Vec<f64>)]) -> ThetaEval {
    let top = batches
        .iter()
        .flat_map(|(lw, _)| lw.iter().copied())
        .fold(f64::NEG_INFINITY, f64::max);
    if !top.is_finite() {
        return ThetaEval { p: f64::NAN, stderr: f64::NAN, ess: 0.0 };
    }
    let (mut num, mut den, mut den2) = (0.0, 0.0, 0.0);
    let mut ratios = Vec::with_capacity(batches.len());
    for (lw, f) in batches {
        let (mut bn, mut bd) = (0.0, 0.0);
        for (l, v) in lw.iter().zip(f) {
            let w = (l - top).exp();
            bn += w * v;
            bd += w;
            den2 += w * w;
        }
        num += bn;
        den += bd;
        if bd > 0.0 {
            ratios.push(bn / bd);
        }
    }
    let r = ratios.len();
    let stderr = if r >= 2 {
        let m = ratios.iter().sum::<f64>() / r as f64;
        (ratios.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / ((r - 1) * r) as f64).sqrt()
    } else {
        f64::NAN
    };
    ThetaEval { p: (num / den).clamp(0.0, 1.0), stderr, ess: den * den / den2 }
}

/// Reference-law samples summarised for closed-form integration of the last
/// reordered coordinate under the importance weights.
struct ReferenceScan {
    scans: Vec<PrefixScan>,
    /// Last row of `L^T tau_pi` per coordinate.
    ell_last: Vec<f64>,
    /// `tau^T mu_bar` per coordinate.
    tau_mu: Vec<f64>,
}

fn reference_scan(rec: &SelectionRecord, laws: &[ConditionalLaw], reps: &ReplicateSet) -> Result<ReferenceScan> {
    let refl = reference_law(rec)?;
    let og = gibson_reorder(refl.mu.clone(), refl.sigma.clone())?;
    let d = rec.d();
    let lt = og.cholesky_factor().transpose();
    let mut slopes = DMatrix::zeros(d, laws.len());
    let mut ell_last = Vec::with_capacity(laws.len());
    let mut tau_mu = Vec::with_capacity(laws.len());
    for (j, law) in laws.iter().enumerate() {
        let tau = law.tau();
        let ell = &lt * og.to_permuted(&tau);
        slopes.set_column(j, &ell);
        ell_last.push(ell[d - 1]);
        tau_mu.push(tau.dot(&refl.mu));
    }
    let scans = par::map_slice(reps.batches(), |b| og.prefix_scan(b, &slopes))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    Ok(ReferenceScan { scans, ell_last, tau_mu })
}

impl ReferenceScan {
    /// `p(theta) = E_ref[wbar Phi(-(b^T tau) - Delta)] / E_ref[wbar]` for
    /// coordinate `j`, with the last coordinate integrated analytically.
    fn eval(&self, j: usize, law: &ConditionalLaw) -> ThetaEval {
        let delta = law.delta();
        let beta = self.ell_last[j];
        let q = 1.0 - beta * beta;
        let sd = 1.0 / q.sqrt();
        let width = self.scans[0].width;
        let parts: Vec<(Vec<f64>, Vec<f64>)> = self
            .scans
            .iter()
            .map(|scan| {
                let n = scan.log_w_head.len();
                let mut lw = Vec::with_capacity(n);
                let mut f = Vec::with_capacity(n);
                for i in 0..n {
                    let x = scan.proj[i * width + j] + self.tau_mu[j] + delta;
                    let m = beta * x / q;
                    let a = (scan.a_last[i] - m) / sd;
                    let (tail, ratio) = preintegrate_with_tail(-beta * sd, -beta * m - x, a);
                    lw.push(scan.log_w_head[i] + x * x / (2.0 * q) + sd.ln() + tail);
                    f.push(ratio);
                }
                (lw, f)
            })
            .collect();
        pooled_ratio(&parts)
    }
}

/// Conditional-CDF intervals for every selected coordinate from a single
/// reference-law sample.
pub fn confidence_intervals(rec: &SelectionRecord, reps: &ReplicateSet, opts: &CiOptions) -> Result<InferenceReport> {
    let d = rec.d();
    let (anchor, scale) = grid_anchor(rec)?;
    let laws: Vec<ConditionalLaw> = (0..d)
        .map(|j| {
            let mut eta = DVector::zeros(d);
            eta[j] = 1.0;
            ConditionalLaw::new(rec, &eta, 0.0)
        })
        .collect::<Result<_>>()?;
    let scan = reference_scan(rec, &laws, reps)?;
    let mut entries = Vec::with_capacity(d);
    for j in 0..d {
        let law = &laws[j];
        let eval = |th: f64| scan.eval(j, &law.at(th));
        let (lower, upper, stderr, min_ess, monotone) = invert(eval, anchor[j], scale[j], opts);
        let null = scan.eval(j, law);
        entries.push(CoordinateInference {
            index: rec.active[j],
            estimate: rec.beta_hat[j],
            pvalue: 2.0 * null.p.min(1.0 - null.p),
            ci_lower: lower,
            ci_upper: upper,
            stderr,
            min_ess: Some(min_ess),
            flagged: !(min_ess >= opts.ess_floor) || !monotone,
        });
    }
    Ok(InferenceReport { method: Method::CdfSov, entries })
}

/// Like [`confidence_intervals`] but failing with `EffectiveSampleCollapse`
/// when any coordinate's interval rests on too few effective samples.
pub fn confidence_intervals_strict(rec: &SelectionRecord, reps: &ReplicateSet, opts: &CiOptions) -> Result<InferenceReport> {
    let report = confidence_intervals(rec, reps, opts)?;
    if let Some(e) = report.entries.iter().find(|e| e.min_ess.is_some_and(|v| !(v >= opts.ess_floor))) {
        return Err(Error::EffectiveSampleCollapse { ess: e.min_ess.unwrap_or(0.0), floor: opts.ess_floor });
    }
    Ok(report)
}

/// Evaluate `p(theta)` for coordinate `j` from the shared reference sample;
/// exposed for consistency checks against a fresh conditional-law estimate.
pub fn reference_pvalue(rec: &SelectionRecord, j: usize, theta: f64, reps: &ReplicateSet) -> Result<ThetaEval> {
    let d = rec.d();
    let mut eta = DVector::zeros(d);
    eta[j] = 1.0;
    let law = ConditionalLaw::new(rec, &eta, theta)?;
    let scan = reference_scan(rec, std::slice::from_ref(&law), reps)?;
    Ok(scan.eval(0, &law))
}

/// `p(theta)` for every selected coordinate from one reference-law scan.
pub fn reference_pvalues(rec: &SelectionRecord, theta: f64, reps: &ReplicateSet) -> Result<Vec<ThetaEval>> {
    let d = rec.d();
    let laws: Vec<ConditionalLaw> = (0..d)
        .map(|j| {
            let mut eta = DVector::zeros(d);
            eta[j] = 1.0;
            ConditionalLaw::new(rec, &eta, theta)
        })
        .collect::<Result<_>>()?;
    let scan = reference_scan(rec, &laws, reps)?;
    Ok(laws.iter().enumerate().map(|(j, law)| scan.eval(j, law)).collect())
}

/// Self-normalised `p(theta)` from draws of `b` under the conditional law at
/// `theta0`, reweighted by the Gaussian density ratio
/// `exp((theta - theta0) (sigma_theta / nu) tau^T b)`. Each element of
/// `draws` is one batch for the standard error.
pub fn reweighted_pvalue(law0: &ConditionalLaw, draws: &[&[DVector<f64>]], theta: f64) -> ThetaEval {
    reweighted_eval(law0, &project(law0, draws), theta)
}

fn project(law0: &ConditionalLaw, draws: &[&[DVector<f64>]]) -> Vec<Vec<f64>> {
    let tau = law0.tau();
    draws.iter().map(|c| c.iter().map(|b| b.dot(&tau)).collect()).collect()
}

fn reweighted_eval(law0: &ConditionalLaw, proj: &[Vec<f64>], theta: f64) -> ThetaEval {
    let coef = law0.sigma_theta() / law0.nu;
    let delta = law0.at(theta).delta();
    let parts: Vec<(Vec<f64>, Vec<f64>)> = proj
        .iter()
        .map(|xs| {
            let lw = xs.iter().map(|x| (theta - law0.theta) * coef * x).collect();
            let f = xs.iter().map(|x| norm_cdf(-x - delta)).collect();
            (lw, f)
        })
        .collect();
    pooled_ratio(&parts)
}

/// Interval from reweighted draws; see [`reweighted_pvalue`].
pub fn reweighted_interval(
    law0: &ConditionalLaw,
    draws: &[&[DVector<f64>]],
    anchor: f64,
    scale: f64,
    opts: &CiOptions,
) -> (f64, f64, f64, f64, bool) {
    let proj = project(law0, draws);
    invert(|th| reweighted_eval(law0, &proj, th), anchor, scale, opts)
}
