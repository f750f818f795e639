mod common;

use std::sync::Arc;

use common::{big_phi, carving_record, gauss, phi, rng, simpson, slope, small_config, unit};
use nalgebra::{DMatrix, DVector};
use selsov::inference::{
    confidence_intervals, grid_anchor, importance_weight, log_importance_weight, pvalue, pvalue_from_law,
    reference_law, reference_pvalue, reference_pvalues, selective_mle, splitting_baseline, CiOptions,
    ConditionalLaw, LawPath, Method, MleOptions, SelectiveLikelihood, SovOptions,
};
use selsov::num::special::norm_inv_cdf;
use selsov::qmc::replicate_set;
use selsov::selection::{Dataset, SelectionRecord};
use selsov::study::{run_simulation, select, ExperimentConfig};

fn records(count: usize) -> Vec<SelectionRecord> {
    (0..count as u64).map(|s| carving_record(&small_config(100 + s), 1..=6)).collect()
}

fn rel_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).amax() / b.amax().max(1e-300)
}

fn vrel(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (a - b).amax() / b.amax().max(1e-300)
}

fn log_gauss(b: &DVector<f64>, mu: &DVector<f64>, cov: &DMatrix<f64>) -> f64 {
    let chol = cov.clone().cholesky().unwrap();
    let z = chol.l().solve_lower_triangular(&(b - mu)).unwrap();
    let logdet: f64 = chol.l().diagonal().iter().map(|v| v.ln()).sum();
    -0.5 * z.norm_squared() - logdet
}

#[test]
fn generic_and_proportional_paths_agree() {
    for rec in records(10) {
        let d = rec.d();
        let mut r = rng(rec.d() as u64);
        let eta = DVector::from_fn(d, |_, _| gauss(&mut r));
        let theta = 0.3;
        let g = ConditionalLaw::generic(&rec, &eta, theta).unwrap();
        let p = ConditionalLaw::proportional(&rec, &eta, theta).unwrap();
        assert_eq!(g.path, LawPath::Generic);
        assert_eq!(p.path, LawPath::Proportional);
        assert!(rel_diff(p.h.as_matrix(), g.h.as_matrix()) < 1e-8);
        assert!(rel_diff(p.h_inv.as_matrix(), g.h_inv.as_matrix()) < 1e-8);
        assert!(vrel(&p.k, &g.k) < 1e-8);
        assert!((p.sigma2_theta - g.sigma2_theta).abs() < 1e-8 * g.sigma2_theta);
        assert!(rel_diff(p.sigma_b.as_matrix(), g.sigma_b.as_matrix()) < 1e-8);
        assert!(vrel(&p.mu_b, &g.mu_b) < 1e-8);
        assert!(vrel(&p.tau(), &g.tau()) < 1e-8);
        assert!((p.delta() - g.delta()).abs() < 1e-8 * g.delta().abs().max(1.0));
    }
}

#[test]
fn conditional_variance_shortcut() {
    for rec in records(10) {
        let kappa = rec.spec.kappa().unwrap();
        for j in 0..rec.d() {
            let g = ConditionalLaw::generic(&rec, &unit(rec.d(), j), 0.0).unwrap();
            let shortcut = g.nu / (1.0 + kappa);
            assert!((g.sigma2_theta - shortcut).abs() < 1e-10 * shortcut, "{} vs {shortcut}", g.sigma2_theta);
        }
    }
}

#[test]
fn selection_precision_inverts_covariance() {
    for rec in records(10) {
        let mut r = rng(7);
        let eta = DVector::from_fn(rec.d(), |_, _| gauss(&mut r));
        let law = ConditionalLaw::new(&rec, &eta, 1.0).unwrap();
        let prod = law.sigma_b.as_matrix() * law.sigma_b_inv();
        let eye = DMatrix::<f64>::identity(rec.d(), rec.d());
        assert!((prod - eye).amax() < 1e-9);
    }
}

#[test]
fn uninformative_selection_gives_half() {
    let rec = carving_record(&small_config(3), 2..=6);
    let reps = replicate_set(rec.d(), 256, 8, 1).unwrap();
    let mut law = ConditionalLaw::new(&rec, &unit(rec.d(), 0), 0.0).unwrap();
    law.c_tilde = DVector::zeros(rec.d());
    law.sigma2_theta = law.nu;
    law.theta = law.theta_hat;
    let p = pvalue_from_law(&law, &reps, SovOptions::default()).unwrap();
    assert!((p.cdf - 0.5).abs() < 1e-12, "{}", p.cdf);
}

#[test]
fn single_variable_pvalue_matches_quadrature() {
    let cfg = ExperimentConfig { n: 100, p: 10, sparsity: 1, c0: 0.6, ..Default::default() };
    let rec = carving_record(&cfg, 1..=1);
    let reps = replicate_set(1, 512, 8, 11).unwrap();
    for theta in [-0.3, 0.0, rec.beta_hat[0], 0.5] {
        let law = ConditionalLaw::new(&rec, &unit(1, 0), theta).unwrap();
        let (mu, s) = (law.mu_b[0], law.sigma_b.as_matrix()[(0, 0)].sqrt());
        let f = law.functional(law.theta_hat);
        let (g1, g2) = (f.g1[0], f.g2);
        let lo = (mu - 12.0 * s).max(0.0);
        let hi = (mu + 12.0 * s).max(lo + s);
        let den = simpson(|b| phi((b - mu) / s), lo, hi, 20_000);
        let num = simpson(|b| phi((b - mu) / s) * big_phi(g1 * b + g2), lo, hi, 20_000);
        let exact = num / den;
        let est = pvalue(&rec, &unit(1, 0), theta, &reps).unwrap();
        assert!(
            (est.cdf - exact).abs() <= 3.0 * est.stderr + 1e-9,
            "theta {theta}: {} vs {exact} (se {})",
            est.cdf,
            est.stderr
        );
    }
}

#[test]
fn reference_law_moments() {
    for rec in records(10) {
        let refl = reference_law(&rec).unwrap();
        let law = ConditionalLaw::new(&rec, &unit(rec.d(), 0), 0.0).unwrap();
        let eye = DMatrix::<f64>::identity(rec.d(), rec.d());
        assert!((refl.sigma.as_matrix() * law.h.as_matrix() - eye).amax() < 1e-9);

        let scale = rec.spec.kappa().unwrap() / rec.sigma2;
        let xm = rec.x_active();
        let resid = &rec.r + &rec.s;
        let g = xm.transpose() * &xm * &rec.beta_hat;
        let inner = DVector::from_fn(rec.d(), |i, _| -scale * rec.signs[i] * (resid[rec.active[i]] - g[i]));
        let lhs = refl.h.as_matrix() * &refl.mu;
        assert!(vrel(&lhs, &inner) < 1e-8);
    }
}

#[test]
fn importance_weight_examples() {
    let b = DVector::from_vec(vec![0.5, 1.0, 2.0]);
    let tau = DVector::zeros(3);
    assert_eq!(importance_weight(&b, &tau, 1.3), 1.0);
    let outside = DVector::from_vec(vec![0.5, -1.0, 2.0]);
    assert_eq!(log_importance_weight(&outside, &DVector::from_element(3, 0.2), 0.1), f64::NEG_INFINITY);
}

#[test]
fn importance_weight_is_density_ratio() {
    for rec in records(6) {
        let d = rec.d();
        let refl = reference_law(&rec).unwrap();
        let mut r = rng(99);
        let eta = DVector::from_fn(d, |_, _| gauss(&mut r));
        let law = ConditionalLaw::new(&rec, &eta, 0.4).unwrap();
        let (tau, delta) = (law.tau(), law.delta());
        let gaps: Vec<f64> = (0..50)
            .map(|_| {
                let b = DVector::from_fn(d, |_, _| gauss(&mut r).abs() * 2.0 + 0.01);
                log_gauss(&b, &law.mu_b, law.sigma_b.as_matrix()) - log_gauss(&b, &refl.mu, refl.sigma.as_matrix()) - log_importance_weight(&b, &tau, delta)
            })
            .collect();
        let spread = gaps.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
            - gaps.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(spread < 1e-7 * gaps[0].abs().max(1.0), "spread {spread}");
    }
}

#[test]
fn importance_weight_monotone_in_delta() {
    let tau = DVector::from_vec(vec![0.3, -0.1, 0.7]);
    let b = DVector::from_vec(vec![1.0, 0.5, 0.2]);
    let x = b.dot(&tau);
    assert!(x > 0.0);
    let ws: Vec<f64> = (-10..=10).map(|k| log_importance_weight(&b, &tau, k as f64 * 0.3)).collect();
    assert!(ws.windows(2).all(|w| w[1] > w[0]));
}

#[test]
fn shared_sample_matches_fresh_conditional_cdf() {
    for rec in records(4) {
        let d = rec.d();
        let shared = replicate_set(d, 4096, 8, 21).unwrap();
        let fresh = replicate_set(d, 1024, 8, 22).unwrap();
        let (anchor, scale) = grid_anchor(&rec).unwrap();
        for j in 0..d {
            for k in [-1.0, -0.5, 0.0, 0.5, 1.0] {
                let theta = anchor[j] + k * scale[j];
                let a = reference_pvalue(&rec, j, theta, &shared).unwrap();
                let b = pvalue(&rec, &unit(d, j), theta, &fresh).unwrap();
                let tol = 3.0 * (a.stderr.powi(2) + b.stderr.powi(2)).sqrt() + 2e-3;
                assert!((a.p - b.cdf).abs() <= tol, "j {j} k {k}: {} vs {} tol {tol}", a.p, b.cdf);
            }
        }
    }
}

#[test]
fn shared_sample_cdf_is_monotone_in_theta() {
    for rec in records(4) {
        let d = rec.d();
        let reps = replicate_set(d, 512, 8, 5).unwrap();
        let (anchor, scale) = grid_anchor(&rec).unwrap();
        let grid: Vec<f64> = (0..60).map(|i| -4.0 + 8.0 * i as f64 / 59.0).collect();
        for j in 0..d {
            let ps: Vec<f64> = grid
                .iter()
                .map(|k| reference_pvalues(&rec, anchor[j] + k * scale[j], &reps).unwrap()[j].p)
                .collect();
            assert!(ps.windows(2).all(|w| w[1] <= w[0] + 1e-12), "{ps:?}");
        }
    }
}

#[test]
fn interval_limits_in_alpha() {
    let rec = carving_record(&small_config(8), 2..=5);
    let reps = replicate_set(rec.d(), 512, 8, 3).unwrap();
    let (anchor, scale) = grid_anchor(&rec).unwrap();

    let base = confidence_intervals(&rec, &reps, &CiOptions { alpha: 0.05, ..Default::default() }).unwrap();
    let wide = confidence_intervals(&rec, &reps, &CiOptions { alpha: 1e-15, ..Default::default() }).unwrap();
    assert_eq!(wide.method, Method::CdfSov);
    for (j, (e, b)) in wide.entries.iter().zip(&base.entries).enumerate() {
        assert!(e.ci_lower >= anchor[j] - 10.0 * scale[j] && e.ci_upper <= anchor[j] + 10.0 * scale[j]);
        assert!(e.ci_lower <= b.ci_lower && e.ci_upper >= b.ci_upper);
        assert!(e.ci_upper - e.ci_lower > 2.0 * (b.ci_upper - b.ci_lower));
    }

    let narrow = confidence_intervals(&rec, &reps, &CiOptions { alpha: 1.0 - 1e-12, ..Default::default() }).unwrap();
    for (j, e) in narrow.entries.iter().enumerate() {
        assert!(e.ci_upper - e.ci_lower <= 2e-3 * scale[j], "{} {}", e.ci_lower, e.ci_upper);
    }
}

#[test]
fn intervals_nest_as_alpha_grows() {
    let rec = carving_record(&small_config(9), 2..=5);
    let reps = replicate_set(rec.d(), 512, 8, 4).unwrap();
    let (_, scale) = grid_anchor(&rec).unwrap();
    let widths: Vec<Vec<f64>> = [0.01, 0.05, 0.2]
        .iter()
        .map(|&alpha| {
            let rep = confidence_intervals(&rec, &reps, &CiOptions { alpha, ..Default::default() }).unwrap();
            rep.entries.iter().map(|e| e.ci_upper - e.ci_lower).collect()
        })
        .collect();
    for j in 0..rec.d() {
        assert!(widths[0][j] + 2e-3 * scale[j] >= widths[1][j]);
        assert!(widths[1][j] + 2e-3 * scale[j] >= widths[2][j]);
    }
}

#[test]
fn splitting_on_all_rows_is_the_z_interval() {
    let mut rec = carving_record(&small_config(12), 2..=6);
    let n = rec.data.n();
    rec.holdout = Some((0..n).collect());
    let rep = splitting_baseline(&rec, 0.1).unwrap();
    let xm = rec.x_active();
    let gram = xm.transpose() * &xm;
    let inv = gram.clone().try_inverse().unwrap();
    let est = &inv * (xm.transpose() * rec.data.y());
    let q = norm_inv_cdf(0.95).unwrap();
    for (j, e) in rep.entries.iter().enumerate() {
        let se = (rec.sigma2 * inv[(j, j)]).sqrt();
        assert!((e.estimate - est[j]).abs() < 1e-10);
        assert!((e.ci_lower - (est[j] - q * se)).abs() < 1e-10);
        assert!((e.ci_upper - (est[j] + q * se)).abs() < 1e-10);
    }
}

#[test]
fn splitting_width_scales_with_holdout_size() {
    let cfg = ExperimentConfig { n: 2000, p: 10, sparsity: 3, c0: 0.5, ..Default::default() };
    let mut rec = carving_record(&cfg, 1..=6);
    let sizes = [50usize, 100, 200, 400, 800, 1600];
    let widths: Vec<f64> = sizes
        .iter()
        .map(|&m| {
            rec.holdout = Some((0..m).collect());
            let rep = splitting_baseline(&rec, 0.05).unwrap();
            rep.entries.iter().map(|e| e.ci_upper - e.ci_lower).sum::<f64>() / rep.entries.len() as f64
        })
        .collect();
    let lx: Vec<f64> = sizes.iter().map(|&m| (m as f64).ln()).collect();
    let ly: Vec<f64> = widths.iter().map(|w| w.ln()).collect();
    let b = slope(&lx, &ly);
    assert!((b + 0.5).abs() < 0.05, "slope {b}");
}

#[test]
fn splitting_coverage() {
    let cfg = ExperimentConfig {
        repetitions: 200,
        methods: vec![Method::Splitting],
        seed: 2024,
        ..small_config(0)
    };
    let table = run_simulation(&cfg).unwrap();
    let row = &table.rows[0];
    assert!(row.intervals > 400);
    assert!(row.coverage > 0.92 && row.coverage < 0.98, "coverage {}", row.coverage);
}

fn mle_opts() -> MleOptions {
    MleOptions { points: 1 << 12, hessian_points: 1 << 13, ..Default::default() }
}

#[test]
fn mle_without_truncation_is_the_observed_estimate() {
    let cfg = ExperimentConfig { n: 400, p: 6, ..Default::default() };
    let mut r = rng(31);
    let x = DMatrix::from_fn(400, 6, |_, _| gauss(&mut r));
    let beta = DVector::from_vec(vec![8.0, -8.0, 6.0, -6.0, 7.0, 5.0]);
    let y = &x * beta + DVector::from_fn(400, |_, _| gauss(&mut r));
    let data = Arc::new(Dataset::new(x, y, Some(1.0)).unwrap());
    let rec = select(&cfg, data, 0).unwrap().unwrap();
    assert_eq!(rec.active, (0..6).collect::<Vec<_>>());
    assert!(rec.b.min() > 5.0);
    let sigma = rec.target_cov().unwrap();
    // the information uses a sampled truncated covariance, whose error shrinks with the point count
    let fit = selective_mle(&rec, &MleOptions { hessian_points: 1 << 15, ..mle_opts() }).unwrap();
    for j in 0..rec.d() {
        assert!((fit.beta[j] - rec.beta_hat[j]).abs() < 1e-3, "{} vs {}", fit.beta[j], rec.beta_hat[j]);
    }
    let prec = sigma.as_matrix().clone().try_inverse().unwrap();
    assert!(rel_diff(fit.info.as_matrix(), &prec) < 1e-3);
}

#[test]
fn likelihood_gradient_matches_finite_differences() {
    for rec in records(4) {
        let d = rec.d();
        let reps = replicate_set(d, 1 << 14, 8, 17).unwrap();
        let lik = SelectiveLikelihood::new(&rec, reps).unwrap();
        let sigma = rec.target_cov().unwrap();
        let mut r = rng(d as u64);
        let beta = DVector::from_fn(d, |j, _| rec.beta_hat[j] + 0.5 * gauss(&mut r) * sigma.as_matrix()[(j, j)].sqrt());
        let (g, _) = lik.gradient(&beta).unwrap();
        for j in 0..d {
            let h = 1e-4 * sigma.as_matrix()[(j, j)].sqrt();
            let up = lik.objective(&(&beta + unit(d, j) * h)).unwrap();
            let dn = lik.objective(&(&beta - unit(d, j) * h)).unwrap();
            let fd = (up - dn) / (2.0 * h);
            assert!((fd - g[j]).abs() <= 1e-3 * g.amax(), "coord {j}: fd {fd} vs {}", g[j]);
        }
    }
}

#[test]
fn mle_descent_diagnostics() {
    for rec in records(6) {
        let fit = selective_mle(&rec, &MleOptions { track_hessian: true, ..mle_opts() }).unwrap();
        assert!(fit.nll.windows(2).all(|w| w[1] <= w[0] + 1e-12), "{:?}", fit.nll);
        assert!(!fit.min_hessian_eig.is_empty());
        assert!(fit.min_hessian_eig.iter().all(|&e| e > 0.0), "{:?}", fit.min_hessian_eig);
        let info = fit.info.as_matrix();
        assert!((info - info.transpose()).amax() < 1e-12);
        assert!(info.clone().symmetric_eigenvalues().iter().all(|&e| e > 0.0));
        for (j, &(lo, hi)) in fit.ci.iter().enumerate() {
            assert!(hi > lo);
            assert!(fit.se[j] > 0.0);
            assert!(lo < fit.beta[j] && fit.beta[j] < hi);
        }
        let rep = fit.report(&rec);
        assert_eq!(rep.method, Method::MleSov);
        assert_eq!(rep.entries.len(), rec.d());
    }
}
