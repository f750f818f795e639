mod common;

use std::sync::Arc;

use common::{gauss, rng, small_config};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use selsov::num::SymMatrix;
use selsov::selection::{
    carve_split, default_cv_grid, estimate_sigma2, extract_kkt, gram_objective, lambda_cv, lambda_theory,
    lasso_gram, select_by_carving, solve_randomized_lasso, Dataset, LassoOptions, RandomizationSpec,
    TargetConvention,
};
use selsov::study::{select, simulate};
use selsov::Error;

fn random_data(n: usize, p: usize, seed: u64) -> Dataset {
    let mut r = rng(seed);
    let x = DMatrix::from_fn(n, p, |_, _| gauss(&mut r));
    let y = DVector::from_fn(n, |i, _| x[(i, 0)] - 0.5 * x[(i, 1 % p)] + gauss(&mut r));
    Dataset::new(x, y, Some(1.0)).unwrap()
}

fn soft(v: f64, t: f64) -> f64 {
    v.signum() * (v.abs() - t).max(0.0)
}

/// Accelerated proximal gradient on `1/2 b'Ab - c'b + lambda |b|_1`.
fn fista(a: &DMatrix<f64>, c: &DVector<f64>, lambda: f64) -> DVector<f64> {
    let step = 1.0 / a.symmetric_eigenvalues().max();
    let p = c.len();
    let (mut x, mut y, mut t) = (DVector::zeros(p), DVector::zeros(p), 1.0f64);
    for _ in 0..50_000 {
        let g = a * &y - c;
        let nx = (&y - g * step).map(|v| soft(v, lambda * step));
        let nt = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        y = &nx + (&nx - &x) * ((t - 1.0) / nt);
        x = nx;
        t = nt;
    }
    x
}

#[test]
fn orthonormal_design_soft_thresholds() {
    let mut r = rng(3);
    let q = DMatrix::from_fn(40, 6, |_, _| gauss(&mut r)).qr().q();
    let y = DVector::from_fn(40, |_, _| 3.0 * gauss(&mut r));
    let omega = DVector::from_fn(6, |_, _| gauss(&mut r));
    let data = Dataset::new(q.clone(), y.clone(), Some(1.0)).unwrap();
    let lambda = 1.5;
    let beta = solve_randomized_lasso(&data, lambda, &omega).unwrap();
    let z = q.transpose() * y + &omega;
    for j in 0..6 {
        assert!((beta[j] - soft(z[j], lambda)).abs() < 1e-12, "coordinate {j}");
    }
}

#[test]
fn large_penalty_gives_zero() {
    let data = random_data(50, 8, 1);
    let omega = DVector::from_element(8, 0.3);
    let top = (data.x().transpose() * data.y() + &omega).amax();
    assert_eq!(solve_randomized_lasso(&data, top * 1.0001, &omega).unwrap(), DVector::zeros(8));
}

#[test]
fn objective_matches_proximal_gradient() {
    for seed in 0..5 {
        let data = random_data(60, 12, 10 + seed);
        let a = data.x().transpose() * data.x();
        let c = data.x().transpose() * data.y();
        let lambda = 0.3 * c.amax();
        let ours = lasso_gram(&a, &c, lambda, None, LassoOptions::default()).unwrap();
        let oracle = fista(&a, &c, lambda);
        let (fo, fr) = (gram_objective(&a, &c, lambda, &ours), gram_objective(&a, &c, lambda, &oracle));
        assert!((fo - fr).abs() <= 1e-8 * fr.abs().max(1.0), "seed {seed}: {fo} vs {fr}");
        assert!(fo <= fr + 1e-8 * fr.abs().max(1.0));
    }
}

#[test]
fn single_variable_record() {
    let mut x = DMatrix::zeros(5, 1);
    x[(0, 0)] = 1.0;
    let y = DVector::from_vec(vec![-10.0, 0.3, -0.2, 0.1, 0.0]);
    let data = Arc::new(Dataset::new(x.clone(), y, Some(1.0)).unwrap());
    let omega = DVector::zeros(1);
    let beta = solve_randomized_lasso(&data, 1.0, &omega).unwrap();
    let spec = RandomizationSpec::Explicit { omega: SymMatrix::new(DMatrix::identity(1, 1)).unwrap() };
    let rec = extract_kkt(data, 1.0, &omega, &beta, spec, TargetConvention::Submodel).unwrap();
    assert_eq!(rec.active, [0]);
    assert_eq!(rec.signs[0], -1.0);
    assert!((rec.b[0] - 9.0).abs() < 1e-12);
}

#[test]
fn empty_selection_is_reported() {
    let data = Arc::new(random_data(30, 4, 2));
    let omega = DVector::zeros(4);
    let beta = DVector::zeros(4);
    let spec = RandomizationSpec::carving(0.8, 1.0).unwrap();
    assert!(matches!(
        extract_kkt(data, 1.0, &omega, &beta, spec, TargetConvention::Submodel),
        Err(Error::EmptyModel)
    ));
}

#[test]
fn carve_split_paper_sizes() {
    let data = random_data(300, 5, 4);
    let split = carve_split(&data, 0.8, 17).unwrap();
    assert_eq!(split.selection_rows.len(), 240);
    assert_eq!(split.holdout_rows.len(), 60);
    assert_eq!(split, carve_split(&data, 0.8, 17).unwrap());
    let mut all: Vec<usize> = split.selection_rows.iter().chain(&split.holdout_rows).copied().collect();
    all.sort_unstable();
    assert_eq!(all, (0..300).collect::<Vec<_>>());
}

#[test]
fn realized_randomization_has_carving_covariance() {
    let (n, p, rho, reps) = (300, 5, 0.8, 2000);
    let mut r = rng(55);
    let x = DMatrix::from_fn(n, p, |_, _| gauss(&mut r));
    let beta = DVector::from_vec(vec![1.0, -1.0, 0.5, 0.0, 0.0]);
    let mean = &x * &beta;
    let lambda = lambda_theory(p, 240) * n as f64;
    let mut sum = DVector::zeros(p);
    let mut outer = DMatrix::zeros(p, p);
    for k in 0..reps {
        let y = &mean + DVector::from_fn(n, |_, _| gauss(&mut r));
        let data = Arc::new(Dataset::new(x.clone(), y, Some(1.0)).unwrap());
        let split = carve_split(&data, rho, k as u64).unwrap();
        let rec = select_by_carving(data, &split, lambda, TargetConvention::Submodel).unwrap();
        sum += &rec.omega;
        outer += &rec.omega * rec.omega.transpose();
    }
    let m = sum / reps as f64;
    let cov = (outer - &m * m.transpose() * reps as f64) / (reps - 1) as f64;
    let want = x.transpose() * &x * ((1.0 - rho) / rho);
    let rel = (&cov - &want).norm() / want.norm();
    assert!(rel <= 0.15, "relative Frobenius error {rel}");
}

#[test]
fn noise_estimate_examples() {
    let mut r = rng(6);
    let x = DMatrix::from_fn(20, 3, |_, _| gauss(&mut r));
    let y = &x * DVector::from_vec(vec![1.0, 2.0, -1.0]);
    assert!(estimate_sigma2(&Dataset::new(x.clone(), y, None).unwrap()).unwrap() < 1e-20);

    let sigma2: f64 = 2.5;
    let beta = DVector::from_vec(vec![0.5, 0.0, -1.0]);
    let mean: f64 = (0..500)
        .map(|_| {
            let y = &x * &beta + DVector::from_fn(20, |_, _| sigma2.sqrt() * gauss(&mut r));
            estimate_sigma2(&Dataset::new(x.clone(), y, None).unwrap()).unwrap()
        })
        .sum::<f64>()
        / 500.0;
    assert!((mean / sigma2 - 1.0).abs() <= 0.05, "mean estimate {mean}");
}

#[test]
fn theory_penalty() {
    assert!((lambda_theory(100, 240) - (100f64.ln() / 240.0).sqrt()).abs() < 1e-15);
    for p in [2, 10, 1000] {
        for n1 in [1, 50, 240] {
            let l = lambda_theory(p, n1);
            assert!((l * l * n1 as f64 - (p as f64).ln()).abs() < 1e-12);
            assert!(lambda_theory(p, n1 + 1) < l);
        }
    }
}

#[test]
fn cv_on_pure_noise_picks_large_penalties() {
    let mut near_top = 0;
    for seed in 0..20 {
        let mut r = rng(700 + seed);
        let x = DMatrix::from_fn(100, 10, |_, _| gauss(&mut r));
        let y = DVector::from_fn(100, |_, _| gauss(&mut r));
        let data = Dataset::new(x, y, Some(1.0)).unwrap();
        let grid = default_cv_grid(&data);
        let lam = lambda_cv(&data, 5, &grid, seed).unwrap();
        let rank = grid.iter().position(|&g| g == lam).unwrap();
        near_top += (rank < 5) as usize;
    }
    assert!(near_top >= 16, "{near_top} of 20 seeds chose one of the five largest penalties");
}

#[test]
fn cv_single_value_and_determinism() {
    let data = random_data(80, 6, 9);
    assert_eq!(lambda_cv(&data, 5, &[0.2], 1).unwrap(), 0.2);
    let grid = default_cv_grid(&data);
    assert_eq!(lambda_cv(&data, 5, &grid, 4).unwrap(), lambda_cv(&data, 5, &grid, 4).unwrap());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn records_satisfy_kkt(seed in 0u64..10_000) {
        let cfg = small_config(seed);
        let sim = simulate(&cfg, 0).unwrap();
        let Some(rec) = select(&cfg, Arc::new(sim.data), 0).unwrap() else { return Ok(()) };
        let back = rec.reconstruct_omega();
        let scale = 1.0 + (rec.data.x().transpose() * rec.data.y()).amax();
        prop_assert!((back - &rec.omega).amax() <= 1e-8 * scale);
        for j in 0..rec.data.p() {
            if !rec.active.contains(&j) {
                prop_assert!(rec.s[j].abs() <= rec.lambda * (1.0 + 1e-10));
            }
        }
        // least-squares residual is orthogonal to the selected columns
        let r_m = DVector::from_fn(rec.d(), |i, _| rec.r[rec.active[i]]);
        prop_assert!(r_m.amax() <= 1e-8 * (rec.data.x().transpose() * rec.data.y()).amax());
        prop_assert!(rec.b.iter().all(|&v| v > 0.0));
    }

    #[test]
    fn sweeps_never_increase_objective(seed in 0u64..10_000) {
        let data = random_data(40, 10, seed);
        let a = data.x().transpose() * data.x();
        let c = data.x().transpose() * data.y();
        let lambda = 0.2 * c.amax();
        let one_sweep = LassoOptions { tol: f64::MAX, ..LassoOptions::default() };
        let mut beta = DVector::zeros(10);
        let mut last = gram_objective(&a, &c, lambda, &beta);
        for _ in 0..20 {
            beta = lasso_gram(&a, &c, lambda, Some(&beta), one_sweep).unwrap();
            let f = gram_objective(&a, &c, lambda, &beta);
            prop_assert!(f <= last + 1e-12 * last.abs().max(1.0));
            last = f;
        }
    }
}
