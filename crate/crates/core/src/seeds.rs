//! Stream splitting for reproducible randomness.
//!
//! Every random stream in the crate is keyed by a `u64` derived from a master
//! seed and a path of stream labels through SplitMix64 finalization:
//! `derive(seed, &[a, b])` = `mix(mix(seed ^ mix(a)) ^ mix(b))`. Streams for
//! different labels are statistically independent, and a stream depends only
//! on its path, never on how many other streams were drawn before it.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 output function.
pub fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive(seed: u64, path: &[u64]) -> u64 {
    path.iter().fold(mix(seed), |acc, &label| mix(acc ^ mix(label)))
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Labels for the top-level streams used by the experiment harness.
pub mod stream {
    pub const DATA: u64 = 1;
    pub const SPLIT: u64 = 2;
    pub const SIGNS: u64 = 3;
    pub const CV: u64 = 4;
    pub const RQMC: u64 = 5;
    pub const MLE: u64 = 6;
    pub const HESSIAN: u64 = 7;
    pub const CHAIN: u64 = 8;
    pub const NOISE: u64 = 9;
}
