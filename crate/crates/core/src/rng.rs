//! Seeded random streams.
//!
//! Every stochastic operation takes an explicit [`Stream`]. Independent
//! consumers get distinct ChaCha stream ids under the same key, so their
//! keystreams never overlap.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub type Stream = ChaCha8Rng;

/// Stream ids used across the crate. Keeping them in one place avoids two
/// consumers sharing a keystream by accident.
pub mod ids {
    pub const DATASET: u64 = 1;
    pub const TRAIN: u64 = 2;
    pub const COLLOCATION: u64 = 3;
    pub const EVAL: u64 = 4;
    pub const FIT: u64 = 5;
    /// Permutation `p` of a two-sample test uses `PERMUTATION + p`.
    pub const PERMUTATION: u64 = 1 << 20;
    /// Closed-loop run `r` uses `CLOSED_LOOP_BASE + r`.
    pub const CLOSED_LOOP_BASE: u64 = 1 << 32;
}

pub fn stream(seed: u64, id: u64) -> Stream {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

#[inline]
pub fn normal(rng: &mut Stream) -> f64 {
    StandardNormal.sample(rng)
}

pub fn normals(rng: &mut Stream, n: usize) -> Vec<f64> {
    (0..n).map(|_| normal(rng)).collect()
}
