//! Seeded randomness.
//!
//! Every stochastic step draws from ChaCha8 seeded with a 64-bit integer via
//! `seed_from_u64`. ChaCha output is specified bit-for-bit, so a given seed
//! yields the same stream on every platform.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type SeededRng = ChaCha8Rng;

pub fn seeded(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Derives an independent stream for a sub-task, e.g. tree `index` of a forest.
pub fn derived(seed: u64, index: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed ^ index)
}

/// A 64-bit seed for pipeline stage `stage`, drawn from its derived stream.
pub fn stage_seed(seed: u64, stage: u64) -> u64 {
    derived(seed, stage).next_u64()
}
