//! Simulation and sampler-comparison harness.

mod config;
mod data;

pub use config::{CovarianceKind, ExperimentConfig, LambdaRule, Scenario};
pub use data::{feature_covariance, signal_size, simulate, SimulatedData};

use std::sync::Arc;
use std::time::Instant;

use nalgebra::DVector;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::baselines::HitAndRun;
use crate::error::{Error, Result};
use crate::inference::{
    confidence_intervals, grid_anchor, reweighted_interval, reweighted_pvalue, selective_mle, splitting_baseline, CiOptions,
    ConditionalLaw, CoordinateInference, InferenceReport, Method, MleOptions,
};
use crate::num::linalg::cholesky;
use crate::num::special::norm_cdf;
use crate::par;
use crate::qmc::{replicate_mean_stderr, replicate_set, sobol_batch};
use crate::seeds::{self, stream};
use crate::selection::{
    carve_split, default_cv_grid, lambda_cv, lambda_theory, select_by_carving, Dataset, SelectionRecord,
    TargetConvention,
};
use crate::sov::{cdf_estimate_batch, gibson_reorder, OrthantGaussian};

/// Carve `data`, tune the penalty and select. `Ok(None)` means the lasso
/// selected nothing.
pub fn select(cfg: &ExperimentConfig, data: Arc<Dataset>, rep: u64) -> Result<Option<SelectionRecord>> {
    let split = carve_split(&data, cfg.rho, seeds::derive(cfg.seed, &[stream::SPLIT, rep]))?;
    let per_obs = match cfg.lambda {
        LambdaRule::Theory => lambda_theory(data.p(), split.selection_rows.len()),
        LambdaRule::Cv => {
            let sel = split.selection_data(&data)?;
            let grid = default_cv_grid(&sel);
            lambda_cv(&sel, cfg.cv_folds, &grid, seeds::derive(cfg.seed, &[stream::CV, rep]))?
        }
    };
    let lambda = per_obs * data.n() as f64;
    match select_by_carving(data, &split, lambda, TargetConvention::Submodel) {
        Ok(rec) => Ok(Some(rec)),
        Err(Error::EmptyModel) => Ok(None),
        Err(e) => Err(e),
    }
}

fn ci_options(cfg: &ExperimentConfig) -> CiOptions {
    CiOptions { alpha: cfg.alpha, ..CiOptions::default() }
}

/// Hit-and-run interval for selected coordinate `j`: one chain of `draws`
/// states under the conditional law at the grid anchor, reweighted across the
/// grid. Also returns the seconds spent after setup (mode and directions).
fn hit_and_run_coordinate(
    rec: &SelectionRecord,
    j: usize,
    (anchor, scale): (f64, f64),
    cfg: &ExperimentConfig,
    draws: usize,
    seed: u64,
) -> Result<(CoordinateInference, f64)> {
    let d = rec.d();
    let opts = ci_options(cfg);
    let mut eta = DVector::zeros(d);
    eta[j] = 1.0;
    let law = ConditionalLaw::new(rec, &eta, anchor)?;
    let sampler = HitAndRun::new(&OrthantGaussian::new(law.mu_b.clone(), law.sigma_b.clone())?, true)?;
    let start = Instant::now();
    let chain = sampler.run(draws, cfg.burn_in, seed);
    let segments: Vec<&[DVector<f64>]> = chain.states.chunks(draws.div_ceil(cfg.batches)).collect();
    let (lower, upper, stderr, min_ess, monotone) = reweighted_interval(&law, &segments, anchor, scale, &opts);
    let null = reweighted_pvalue(&law, &segments, 0.0);
    let seconds = start.elapsed().as_secs_f64();
    let entry = CoordinateInference {
        index: rec.active[j],
        estimate: rec.beta_hat[j],
        pvalue: 2.0 * null.p.min(1.0 - null.p),
        ci_lower: lower,
        ci_upper: upper,
        stderr,
        min_ess: Some(min_ess),
        flagged: !(min_ess >= opts.ess_floor) || !monotone,
    };
    Ok((entry, seconds))
}

/// Hit-and-run intervals with `rqmc_n` retained states per coordinate.
pub fn hit_and_run_intervals(rec: &SelectionRecord, cfg: &ExperimentConfig, seed: u64) -> Result<InferenceReport> {
    let (anchor, scale) = grid_anchor(rec)?;
    let entries = (0..rec.d())
        .map(|j| {
            let seed = seeds::derive(seed, &[j as u64]);
            hit_and_run_coordinate(rec, j, (anchor[j], scale[j]), cfg, cfg.rqmc_n, seed).map(|(e, _)| e)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(InferenceReport { method: Method::HitAndRun, entries })
}

/// Run one inference method on a selection record. `rep` keys the random
/// streams so that repetitions are independent.
pub fn infer(rec: &SelectionRecord, cfg: &ExperimentConfig, method: Method, rep: u64) -> Result<InferenceReport> {
    match method {
        Method::Splitting => splitting_baseline(rec, cfg.alpha),
        Method::CdfSov => {
            let reps = replicate_set(
                rec.d(),
                cfg.batch_size(),
                cfg.batches,
                seeds::derive(cfg.seed, &[stream::RQMC, rep]),
            )?;
            confidence_intervals(rec, &reps, &ci_options(cfg))
        }
        Method::MleSov => {
            let opts = MleOptions {
                points: cfg.batch_size(),
                batches: cfg.batches,
                alpha: cfg.alpha,
                seed: seeds::derive(cfg.seed, &[stream::MLE, rep]),
                ..MleOptions::default()
            };
            Ok(selective_mle(rec, &opts)?.report(rec))
        }
        Method::HitAndRun => hit_and_run_intervals(rec, cfg, seeds::derive(cfg.seed, &[stream::CHAIN, rep])),
    }
}

/// Projection of the true coefficients onto the selected columns,
/// `(X_M^T X_M)^{-1} X_M^T X beta`.
pub fn submodel_target(rec: &SelectionRecord, beta: &DVector<f64>) -> Result<DVector<f64>> {
    let xm = rec.x_active();
    let g = cholesky(&(xm.transpose() * &xm)).map_err(|_| Error::RankDeficient("selected design".into()))?;
    Ok(g.solve(&(xm.transpose() * (rec.data.x() * beta))))
}

/// Coverage tally of one method in one repetition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodTally {
    pub method: Method,
    pub covered: usize,
    pub total: usize,
    pub length_sum: f64,
    pub stderr_sum: f64,
    pub flagged: usize,
    pub seconds: f64,
}

/// Outcome of one repetition. Methods that failed carry their error message.
#[derive(Debug, Clone, PartialEq)]
pub enum Repetition {
    Empty,
    Done(Vec<(Method, std::result::Result<MethodTally, String>)>),
}

pub fn run_repetition(cfg: &ExperimentConfig, rep: u64) -> Result<Repetition> {
    let sim = simulate(cfg, rep)?;
    let data = Arc::new(sim.data);
    let Some(rec) = select(cfg, data, rep)? else { return Ok(Repetition::Empty) };
    let target = submodel_target(&rec, &sim.beta)?;
    let out = cfg
        .methods
        .iter()
        .map(|&m| {
            let start = Instant::now();
            let res = infer(&rec, cfg, m, rep)
                .map(|report| {
                    let mut t = MethodTally {
                        method: m,
                        covered: 0,
                        total: 0,
                        length_sum: 0.0,
                        stderr_sum: 0.0,
                        flagged: 0,
                        seconds: 0.0,
                    };
                    for (e, &truth) in report.entries.iter().zip(target.iter()) {
                        t.total += 1;
                        t.covered += usize::from(e.covers(truth));
                        t.length_sum += e.length();
                        t.stderr_sum += if e.stderr.is_finite() { e.stderr } else { 0.0 };
                        t.flagged += usize::from(e.flagged);
                    }
                    t.seconds = start.elapsed().as_secs_f64();
                    t
                })
                .map_err(|e| e.to_string());
            (m, res)
        })
        .collect();
    Ok(Repetition::Done(out))
}

/// One summary row per method that produced at least one interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub method: Method,
    pub n: usize,
    pub p: usize,
    pub covariance: CovarianceKind,
    pub covariance_param: f64,
    pub c0: f64,
    pub lambda: LambdaRule,
    /// Repetitions in which this method produced intervals.
    pub repetitions: usize,
    pub empty: usize,
    pub failed: usize,
    pub intervals: usize,
    pub coverage: f64,
    pub coverage_lo: f64,
    pub coverage_hi: f64,
    pub mean_length: f64,
    pub length_lo: f64,
    pub length_hi: f64,
    pub mean_stderr: f64,
    pub flagged: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub seconds: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultTable {
    pub rows: Vec<ResultRow>,
    /// `rep <k>, <method>: <message>` for every failed inference.
    pub failures: Vec<String>,
}

/// Percentile bootstrap over repetitions of `sum(num) / sum(den)`.
pub fn bootstrap_ratio(num: &[f64], den: &[f64], resamples: usize, seed: u64) -> (f64, f64) {
    let r = num.len();
    if r == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mut rng = seeds::rng(seed);
    let mut stats: Vec<f64> = (0..resamples)
        .map(|_| {
            let (mut a, mut b) = (0.0, 0.0);
            for _ in 0..r {
                let k = rng.random_range(0..r);
                a += num[k];
                b += den[k];
            }
            if b > 0.0 {
                a / b
            } else {
                f64::NAN
            }
        })
        .filter(|v| v.is_finite())
        .collect();
    if stats.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    stats.sort_by(f64::total_cmp);
    let at = |q: f64| stats[((q * (stats.len() - 1) as f64).round() as usize).min(stats.len() - 1)];
    (at(0.025), at(0.975))
}

pub fn summarize(cfg: &ExperimentConfig, reps: &[Repetition]) -> ResultTable {
    let empty = reps.iter().filter(|r| matches!(r, Repetition::Empty)).count();
    let mut failures = Vec::new();
    for (k, r) in reps.iter().enumerate() {
        if let Repetition::Done(v) = r {
            for (m, res) in v {
                if let Err(msg) = res {
                    failures.push(format!("rep {k}, {m}: {msg}"));
                }
            }
        }
    }
    let rows = cfg
        .methods
        .iter()
        .enumerate()
        .filter_map(|(mi, &m)| {
            let mut tallies = Vec::new();
            let mut failed = 0;
            for r in reps {
                if let Repetition::Done(v) = r {
                    match v.iter().find(|(mm, _)| *mm == m).map(|(_, res)| res) {
                        Some(Ok(t)) => tallies.push(t),
                        Some(Err(_)) => failed += 1,
                        None => {}
                    }
                }
            }
            if tallies.is_empty() {
                return None;
            }
            let covered: Vec<f64> = tallies.iter().map(|t| t.covered as f64).collect();
            let total: Vec<f64> = tallies.iter().map(|t| t.total as f64).collect();
            let length: Vec<f64> = tallies.iter().map(|t| t.length_sum).collect();
            let intervals: f64 = total.iter().sum();
            let ratio = |a: f64| if intervals > 0.0 { a / intervals } else { f64::NAN };
            let bseed = seeds::derive(cfg.seed, &[0xb007, mi as u64]);
            let (coverage_lo, coverage_hi) = bootstrap_ratio(&covered, &total, cfg.bootstrap, bseed);
            let (length_lo, length_hi) = bootstrap_ratio(&length, &total, cfg.bootstrap, bseed ^ 1);
            Some(ResultRow {
                method: m,
                n: cfg.n,
                p: cfg.p,
                covariance: cfg.covariance,
                covariance_param: cfg.covariance_param,
                c0: cfg.c0,
                lambda: cfg.lambda,
                repetitions: tallies.len(),
                empty,
                failed,
                intervals: intervals as usize,
                coverage: ratio(covered.iter().sum()),
                coverage_lo,
                coverage_hi,
                mean_length: ratio(length.iter().sum()),
                length_lo,
                length_hi,
                mean_stderr: ratio(tallies.iter().map(|t| t.stderr_sum).sum()),
                flagged: tallies.iter().map(|t| t.flagged).sum(),
                seconds: cfg.timing.then(|| {
                    let s: f64 = tallies.iter().map(|t| t.seconds).sum();
                    s / tallies.len() as f64
                }),
            })
        })
        .collect();
    ResultTable { rows, failures }
}

/// Run `cfg.repetitions` independent repetitions and summarize them.
pub fn run_simulation(cfg: &ExperimentConfig) -> Result<ResultTable> {
    cfg.validate()?;
    let reps = par::map_range(cfg.repetitions, |k| run_repetition(cfg, k as u64))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    Ok(summarize(cfg, &reps))
}

/// SOV against hit-and-run for one selected coordinate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareRow {
    pub index: usize,
    pub sov_points: usize,
    pub hit_and_run_draws: usize,
    pub randomizations: usize,
    pub sov_pvalue: f64,
    pub sov_stderr: f64,
    pub hit_and_run_pvalue: f64,
    pub hit_and_run_stderr: f64,
    /// Seconds for all randomizations of the p-value.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub sov_seconds: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub hit_and_run_seconds: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareTable {
    pub rows: Vec<CompareRow>,
}

/// Two-sided p-value at `theta = 0` for every selected coordinate of one
/// simulated instance, repeated over `replicates` randomizations: SOV with
/// `compare_n` points against hit-and-run with `hit_and_run_factor *
/// compare_n` draws after burn-in. Setup (reordering, mode, directions) is
/// not timed.
pub fn run_compare(cfg: &ExperimentConfig) -> Result<CompareTable> {
    cfg.validate()?;
    let sim = simulate(cfg, 0)?;
    let rec = select(cfg, Arc::new(sim.data), 0)?.ok_or(Error::EmptyModel)?;
    compare_record(&rec, cfg)
}

pub fn compare_record(rec: &SelectionRecord, cfg: &ExperimentConfig) -> Result<CompareTable> {
    let d = rec.d();
    let r = cfg.replicates;
    let draws = cfg.hit_and_run_factor * cfg.compare_n;
    let two_sided = |f: f64| 2.0 * f.min(1.0 - f);

    let rows = (0..d)
        .map(|j| {
            let mut eta = DVector::zeros(d);
            eta[j] = 1.0;
            let law = ConditionalLaw::new(rec, &eta, 0.0)?;
            let fnl = law.functional(law.theta_hat);

            let og = gibson_reorder(law.mu_b.clone(), law.sigma_b.clone())?;
            let start = Instant::now();
            let sov = par::map_range(r, |k| {
                let seed = seeds::derive(cfg.seed, &[stream::RQMC, j as u64, k as u64]);
                cdf_estimate_batch(&og, &fnl, &sobol_batch(d, cfg.compare_n, seed)?, true).map(two_sided)
            })
            .into_iter()
            .collect::<Result<Vec<_>>>()?;
            let sov_seconds = start.elapsed().as_secs_f64();

            let sampler = HitAndRun::new(&OrthantGaussian::new(law.mu_b.clone(), law.sigma_b.clone())?, true)?;
            let start = Instant::now();
            let hr = par::map_range(r, |k| {
                let seed = seeds::derive(cfg.seed, &[stream::CHAIN, j as u64, k as u64]);
                let chain = sampler.run(draws, cfg.burn_in, seed);
                let f = chain.states.iter().map(|b| norm_cdf(fnl.g1.dot(b) + fnl.g2)).sum::<f64>() / draws as f64;
                two_sided(f)
            });
            let hr_seconds = start.elapsed().as_secs_f64();

            let (sov_pvalue, sov_stderr) = mean_sd(&sov)?;
            let (hit_and_run_pvalue, hit_and_run_stderr) = mean_sd(&hr)?;
            Ok(CompareRow {
                index: rec.active[j],
                sov_points: cfg.compare_n,
                hit_and_run_draws: draws,
                randomizations: r,
                sov_pvalue,
                sov_stderr,
                hit_and_run_pvalue,
                hit_and_run_stderr,
                sov_seconds: cfg.timing.then_some(sov_seconds),
                hit_and_run_seconds: cfg.timing.then_some(hr_seconds),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CompareTable { rows })
}

/// Mean and standard deviation (not of the mean) across randomizations.
fn mean_sd(v: &[f64]) -> Result<(f64, f64)> {
    let (m, se) = replicate_mean_stderr(v)?;
    Ok((m, se * (v.len() as f64).sqrt()))
}
