//! Randomized quasi-Monte Carlo point sets: scrambled Sobol' batches and a
//! pseudo-random fallback sharing the same interface.

pub mod directions;

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::{par, seeds};

pub use directions::MAX_DIM;

/// Largest supported batch size.
pub const MAX_POINTS: usize = 1 << 24;

const TO_UNIT: f64 = 1.0 / (1u64 << 53) as f64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Generator {
    SobolScrambled,
    PseudoRandom,
}

/// `N` points in `[0,1)^d`, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PointBatch {
    dim: usize,
    size: usize,
    points: Vec<f64>,
    generator: Generator,
    seed: u64,
}

impl PointBatch {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.size
    }

    pub fn is_empty(&self) -> bool {
        self.size == 0
    }

    pub fn generator(&self) -> Generator {
        self.generator
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    pub fn points(&self) -> impl Iterator<Item = &[f64]> {
        self.points.chunks_exact(self.dim)
    }
}

#[inline]
fn word_to_unit(x: u64) -> f64 {
    (x >> 11) as f64 * TO_UNIT
}

fn check_shape(d: usize, n: usize) -> Result<()> {
    if d == 0 {
        return Err(Error::InvalidInput("dimension must be at least 1".into()));
    }
    if d > MAX_DIM {
        return Err(Error::UnsupportedDimension { requested: d, available: MAX_DIM });
    }
    if !n.is_power_of_two() || n > MAX_POINTS {
        return Err(Error::InvalidInput(format!(
            "Sobol' batch size must be a power of two up to 2^24, got {n}"
        )));
    }
    Ok(())
}

/// Left-multiply a direction word by a lower-triangular bit matrix whose rows
/// are given most-significant first.
fn scramble_word(rows: &[u64; 64], v: u64) -> u64 {
    let mut out = 0u64;
    for (i, row) in rows.iter().enumerate() {
        out |= (((row & v).count_ones() & 1) as u64) << (63 - i);
    }
    out
}

fn sobol_points(d: usize, n: usize, seed: Option<u64>) -> Result<Vec<f64>> {
    check_shape(d, n)?;
    let mut dirs = directions::direction_words(d)?;
    let mut state = vec![0u64; d];
    if let Some(seed) = seed {
        let mut rng = seeds::rng(seed);
        for (v, shift) in dirs.iter_mut().zip(state.iter_mut()) {
            let mut rows = [0u64; 64];
            for (i, row) in rows.iter_mut().enumerate() {
                let above = if i == 0 { 0 } else { !0u64 << (64 - i) };
                *row = (rng.next_u64() & above) | (1u64 << (63 - i));
            }
            for w in v.iter_mut() {
                *w = scramble_word(&rows, *w);
            }
            *shift = rng.next_u64();
        }
    }
    let mut points = Vec::with_capacity(n * d);
    for i in 0..n {
        if i > 0 {
            let c = i.trailing_zeros() as usize;
            for (x, v) in state.iter_mut().zip(&dirs) {
                *x ^= v[c];
            }
        }
        points.extend(state.iter().map(|&x| word_to_unit(x)));
    }
    Ok(points)
}

/// Scrambled Sobol' batch: random linear matrix scramble plus digital shift,
/// both keyed by `seed`.
pub fn sobol_batch(d: usize, n: usize, seed: u64) -> Result<PointBatch> {
    Ok(PointBatch {
        dim: d,
        size: n,
        points: sobol_points(d, n, Some(seed))?,
        generator: Generator::SobolScrambled,
        seed,
    })
}

/// The raw (unrandomized) Sobol' points, in Gray-code order.
pub fn sobol_unscrambled(d: usize, n: usize) -> Result<PointBatch> {
    Ok(PointBatch {
        dim: d,
        size: n,
        points: sobol_points(d, n, None)?,
        generator: Generator::SobolScrambled,
        seed: 0,
    })
}

/// Independent uniforms from a seeded ChaCha stream.
pub fn pseudo_random_batch(d: usize, n: usize, seed: u64) -> Result<PointBatch> {
    if d == 0 {
        return Err(Error::InvalidInput("dimension must be at least 1".into()));
    }
    let mut rng = seeds::rng(seed);
    let points = (0..n * d).map(|_| word_to_unit(rng.next_u64())).collect();
    Ok(PointBatch { dim: d, size: n, points, generator: Generator::PseudoRandom, seed })
}

/// Generate a batch of either kind.
pub fn batch(generator: Generator, d: usize, n: usize, seed: u64) -> Result<PointBatch> {
    match generator {
        Generator::SobolScrambled => sobol_batch(d, n, seed),
        Generator::PseudoRandom => pseudo_random_batch(d, n, seed),
    }
}

/// `R` independently randomized batches sharing `(d, N)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicateSet {
    batches: Vec<PointBatch>,
}

impl ReplicateSet {
    pub fn from_batches(batches: Vec<PointBatch>) -> Result<Self> {
        let first = batches
            .first()
            .ok_or_else(|| Error::InvalidInput("a replicate set needs at least one batch".into()))?;
        if batches.iter().any(|b| b.dim != first.dim || b.size != first.size) {
            return Err(Error::InvalidInput("replicate batches must share (d, N)".into()));
        }
        Ok(Self { batches })
    }

    pub fn dim(&self) -> usize {
        self.batches[0].dim
    }

    /// Points per batch.
    pub fn batch_size(&self) -> usize {
        self.batches[0].size
    }

    pub fn replicates(&self) -> usize {
        self.batches.len()
    }

    pub fn batches(&self) -> &[PointBatch] {
        &self.batches
    }

    pub fn generator(&self) -> Generator {
        self.batches[0].generator
    }
}

/// Scrambled Sobol' replicate set; replicate `r` uses the seed derived from
/// `(seed, r)`.
pub fn replicate_set(d: usize, n: usize, r: usize, seed: u64) -> Result<ReplicateSet> {
    replicate_set_with(Generator::SobolScrambled, d, n, r, seed)
}

pub fn replicate_set_with(
    generator: Generator,
    d: usize,
    n: usize,
    r: usize,
    seed: u64,
) -> Result<ReplicateSet> {
    if r == 0 {
        return Err(Error::InsufficientReplicates(0));
    }
    let batches = par::map_range(r, |k| {
        batch(generator, d, n, seeds::derive(seed, &[seeds::stream::RQMC, k as u64]))
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    ReplicateSet::from_batches(batches)
}

/// Split a total point budget into `r` equal power-of-two batches.
pub fn split_budget(total: usize, r: usize) -> Result<usize> {
    if r == 0 {
        return Err(Error::InsufficientReplicates(0));
    }
    let per = total / r;
    if per == 0 || !per.is_power_of_two() || per * r != total {
        return Err(Error::InvalidInput(format!(
            "cannot split {total} points into {r} power-of-two batches"
        )));
    }
    Ok(per)
}

/// Mean and standard error (`sd / sqrt(R)`) of per-replicate estimates.
pub fn replicate_mean_stderr(values: &[f64]) -> Result<(f64, f64)> {
    let r = values.len();
    if r < 2 {
        return Err(Error::InsufficientReplicates(r));
    }
    let mean = values.iter().sum::<f64>() / r as f64;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (r - 1) as f64;
    Ok((mean, (var / r as f64).sqrt()))
}
