mod common;

use common::{slope, small_config};
use nalgebra::DVector;
use selsov::inference::Method;
use selsov::par;
use selsov::study::{
    bootstrap_ratio, feature_covariance, run_compare, run_simulation, signal_size, simulate, submodel_target,
    summarize, CovarianceKind, ExperimentConfig, Repetition,
};

#[test]
fn signal_size_example() {
    assert!((signal_size(0.6, 100, 300) - 0.13572280848830223).abs() < 1e-15);
    assert_eq!(signal_size(0.0, 50, 10), 0.0);
}

#[test]
fn feature_covariance_examples() {
    let ar = feature_covariance(CovarianceKind::Ar, 0.5, 4);
    assert_eq!(ar[(0, 3)], 0.125);
    assert_eq!(ar[(2, 1)], 0.5);
    assert_eq!(ar[(3, 3)], 1.0);
    let eq = feature_covariance(CovarianceKind::Equi, 0.3, 3);
    assert_eq!(eq[(0, 1)], 0.3);
    assert_eq!(eq[(1, 1)], 1.0);
    assert_eq!(eq, eq.transpose());
}

#[test]
fn simulated_data_shape_and_law() {
    let cfg = ExperimentConfig { n: 4000, p: 6, sparsity: 2, covariance_param: 0.5, c0: 2.0, ..Default::default() };
    let sim = simulate(&cfg, 3).unwrap();
    assert_eq!(sim.data.x().shape(), (4000, 6));
    assert_eq!(sim.data.y().len(), 4000);
    let size = signal_size(2.0, 6, 4000);
    let support: Vec<f64> = sim.beta.iter().copied().filter(|&b| b != 0.0).collect();
    assert_eq!(support.len(), 2);
    assert!(support.iter().all(|b| (b.abs() - size).abs() < 1e-15));

    let x = sim.data.x();
    let emp = x.transpose() * x / 4000.0;
    let truth = feature_covariance(CovarianceKind::Ar, 0.5, 6);
    assert!((emp - truth).amax() < 0.08);

    let resid = sim.data.y() - x * &sim.beta;
    let var = resid.norm_squared() / 4000.0;
    assert!((var - 1.0).abs() < 0.08, "{var}");
    let s2 = sim.data.sigma2().unwrap();
    assert!((s2 - 1.0).abs() < 0.08);
}

#[test]
fn high_dimensional_noise_variance_is_one() {
    let cfg = ExperimentConfig { n: 50, p: 80, sparsity: 3, ..Default::default() };
    assert_eq!(simulate(&cfg, 0).unwrap().data.sigma2(), Some(1.0));
}

#[test]
fn simulation_is_reproducible_and_seeded() {
    let cfg = small_config(5);
    let a = simulate(&cfg, 2).unwrap();
    let b = simulate(&cfg, 2).unwrap();
    assert_eq!(a.data.y(), b.data.y());
    assert_eq!(a.beta, b.beta);
    assert_ne!(simulate(&cfg, 3).unwrap().data.y(), a.data.y());
    assert_ne!(simulate(&small_config(6), 2).unwrap().data.y(), a.data.y());
}

#[test]
fn submodel_target_on_a_covering_model() {
    let rec = common::carving_record(&small_config(1), 2..=8);
    let mut beta = DVector::zeros(rec.data.p());
    for (k, &j) in rec.active.iter().enumerate() {
        beta[j] = 0.5 - k as f64 * 0.3;
    }
    let t = submodel_target(&rec, &beta).unwrap();
    for (k, &j) in rec.active.iter().enumerate() {
        assert!((t[k] - beta[j]).abs() < 1e-10);
    }
}

#[test]
fn zero_repetitions_give_an_empty_table() {
    let cfg = ExperimentConfig { repetitions: 0, ..small_config(0) };
    let t = run_simulation(&cfg).unwrap();
    assert!(t.rows.is_empty());
    assert!(t.failures.is_empty());
}

#[test]
fn summary_counts_empty_repetitions() {
    let cfg = small_config(0);
    let t = summarize(&cfg, &[Repetition::Empty, Repetition::Empty]);
    assert!(t.rows.is_empty());
}

#[test]
fn bootstrap_interval_brackets_the_ratio() {
    let num = [3.0, 4.0, 2.0, 5.0, 4.0, 3.0, 4.0];
    let den = [4.0, 5.0, 3.0, 5.0, 4.0, 4.0, 5.0];
    let ratio = num.iter().sum::<f64>() / den.iter().sum::<f64>();
    let (lo, hi) = bootstrap_ratio(&num, &den, 1000, 3);
    assert!(lo <= ratio && ratio <= hi);
    assert!(hi <= 1.0);
    assert_eq!((lo, hi), bootstrap_ratio(&num, &den, 1000, 3));
    assert!(bootstrap_ratio(&[], &[], 100, 0).0.is_nan());
}

#[test]
fn simulation_is_deterministic_across_schedulers() {
    let cfg = ExperimentConfig {
        repetitions: 6,
        methods: vec![Method::Splitting, Method::CdfSov, Method::MleSov, Method::HitAndRun],
        ..small_config(77)
    };
    let a = run_simulation(&cfg).unwrap();
    par::set_parallel(false);
    let b = run_simulation(&cfg).unwrap();
    par::set_parallel(true);
    assert_eq!(a, b);
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    assert!(a.rows.iter().all(|r| r.seconds.is_none()));

    let other = run_simulation(&ExperimentConfig { seed: 78, ..cfg.clone() }).unwrap();
    assert_ne!(a, other);
}

#[test]
fn timing_columns_are_opt_in() {
    let cfg = ExperimentConfig { repetitions: 2, methods: vec![Method::Splitting], timing: true, ..small_config(4) };
    let t = run_simulation(&cfg).unwrap();
    assert!(t.rows.iter().all(|r| r.seconds.is_some()));
}

fn compare_cfg(n: usize) -> ExperimentConfig {
    ExperimentConfig { compare_n: n, replicates: 12, hit_and_run_factor: 5, ..small_config(13) }
}

#[test]
fn sov_is_less_variable_than_hit_and_run() {
    let t = run_compare(&compare_cfg(256)).unwrap();
    assert!(!t.rows.is_empty());
    for row in &t.rows {
        assert_eq!(row.hit_and_run_draws, 5 * 256);
        assert_eq!(row.randomizations, 12);
        assert!(row.sov_stderr < row.hit_and_run_stderr, "{row:?}");
        assert!((0.0..=1.0).contains(&row.sov_pvalue));
        assert!(row.sov_seconds.is_none());
    }
}

#[test]
fn compare_is_reproducible() {
    let a = run_compare(&compare_cfg(64)).unwrap();
    let b = run_compare(&compare_cfg(64)).unwrap();
    assert_eq!(a, b);
}

#[test]
fn sov_error_decays_faster_than_monte_carlo() {
    let ns = [64usize, 128, 256, 512, 1024];
    let tables: Vec<_> = ns.iter().map(|&n| run_compare(&compare_cfg(n)).unwrap()).collect();
    let lx: Vec<f64> = ns.iter().map(|&n| (n as f64).ln()).collect();
    let rows = tables[0].rows.len();
    let mut sov_slopes = Vec::new();
    let mut hr_slopes = Vec::new();
    for j in 0..rows {
        let sov: Vec<f64> = tables.iter().map(|t| t.rows[j].sov_stderr.max(1e-300).ln()).collect();
        let hr: Vec<f64> = tables.iter().map(|t| t.rows[j].hit_and_run_stderr.ln()).collect();
        sov_slopes.push(slope(&lx, &sov));
        hr_slopes.push(slope(&lx, &hr));
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let (s, h) = (mean(&sov_slopes), mean(&hr_slopes));
    assert!(s < -0.6, "sov slope {s}");
    assert!((h + 0.5).abs() < 0.25, "hit-and-run slope {h}");
}
