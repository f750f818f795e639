#![allow(dead_code)]

use std::sync::{Arc, OnceLock};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use rand_distr::StandardNormal;
use selsov::num::SymMatrix;
use selsov::selection::SelectionRecord;
use selsov::study::{select, simulate, ExperimentConfig};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gauss(r: &mut ChaCha8Rng) -> f64 {
    r.sample(StandardNormal)
}

/// Composite Simpson rule with `n` (even) panels.
pub fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, n: usize) -> f64 {
    let n = n + n % 2;
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        s += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

/// Standard normal density, written out independently of the crate.
pub fn phi(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

const TABLE_LO: f64 = -12.0;
const TABLE_STEP: f64 = 1e-3;

/// `Phi` on a grid over `[-12, 0]`, integrated outward from `Phi(0) = 1/2`
/// panel by panel with Simpson's rule and compensated summation.
fn phi_table() -> &'static [f64] {
    static TABLE: OnceLock<Vec<f64>> = OnceLock::new();
    TABLE.get_or_init(|| {
        let n = (-TABLE_LO / TABLE_STEP).round() as usize;
        let mut v = vec![0.0; n + 1];
        let (mut acc, mut comp) = (0.5, 0.0);
        v[n] = acc;
        for i in (0..n).rev() {
            let a = TABLE_LO + i as f64 * TABLE_STEP;
            let b = TABLE_LO + (i + 1) as f64 * TABLE_STEP;
            let y = -simpson(phi, a, b, 8) - comp;
            let t = acc + y;
            comp = (t - acc) - y;
            acc = t;
            v[i] = acc;
        }
        v
    })
}

/// `Phi(x)` from the table with cubic Hermite interpolation (the derivative
/// is the density, known exactly).
pub fn big_phi(x: f64) -> f64 {
    if x > 0.0 {
        return 1.0 - big_phi(-x);
    }
    if x <= TABLE_LO {
        return 0.0;
    }
    let t = phi_table();
    let pos = (x - TABLE_LO) / TABLE_STEP;
    let i = (pos.floor() as usize).min(t.len() - 2);
    let u = pos - i as f64;
    let x0 = TABLE_LO + i as f64 * TABLE_STEP;
    let x1 = TABLE_LO + (i + 1) as f64 * TABLE_STEP;
    let (f0, f1) = (t[i], t[i + 1]);
    let (d0, d1) = (phi(x0) * TABLE_STEP, phi(x1) * TABLE_STEP);
    let (u2, u3) = (u * u, u * u * u);
    (2.0 * u3 - 3.0 * u2 + 1.0) * f0 + (u3 - 2.0 * u2 + u) * d0 + (-2.0 * u3 + 3.0 * u2) * f1 + (u3 - u2) * d1
}

/// Random positive-definite matrix `A A^T / d + 0.2 I`.
pub fn spd(d: usize, seed: u64) -> DMatrix<f64> {
    let mut r = rng(seed);
    let a = DMatrix::from_fn(d, d, |_, _| gauss(&mut r));
    &a * a.transpose() / d as f64 + DMatrix::identity(d, d) * 0.2
}

pub fn sym(m: DMatrix<f64>) -> SymMatrix {
    SymMatrix::new(m).unwrap()
}

pub fn small_config(seed: u64) -> ExperimentConfig {
    ExperimentConfig { n: 120, p: 20, sparsity: 4, c0: 0.9, seed, ..Default::default() }
}

/// First carving record produced by consecutive seeds whose model size lies
/// in `sizes`.
pub fn carving_record(cfg: &ExperimentConfig, sizes: std::ops::RangeInclusive<usize>) -> SelectionRecord {
    for rep in 0..500 {
        let sim = simulate(cfg, rep).unwrap();
        if let Some(rec) = select(cfg, Arc::new(sim.data), rep).unwrap() {
            if sizes.contains(&rec.d()) {
                return rec;
            }
        }
    }
    panic!("no record with {sizes:?} selected variables");
}

/// Kolmogorov–Smirnov statistic of `xs` against the CDF `f`.
pub fn ks_statistic(xs: &[f64], f: impl Fn(f64) -> f64) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    v.iter()
        .enumerate()
        .map(|(i, &x)| {
            let c = f(x);
            (c - i as f64 / n).abs().max(((i + 1) as f64 / n - c).abs())
        })
        .fold(0.0, f64::max)
}

/// Asymptotic one-sample KS critical value at level 0.01.
pub fn ks_critical_01(n: usize) -> f64 {
    1.6276 / (n as f64).sqrt()
}

pub fn unit(d: usize, j: usize) -> DVector<f64> {
    let mut e = DVector::zeros(d);
    e[j] = 1.0;
    e
}

/// Least-squares slope of `ys` on `xs`.
pub fn slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}
