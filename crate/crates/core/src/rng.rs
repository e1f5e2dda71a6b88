//! Seeded randomness for reproducible runs.
//!
//! All harness randomness comes from SplitMix64 with the reference constants:
//! the state starts at the seed, each draw adds `0x9E3779B97F4A7C15` to the
//! state and returns it mixed through
//! `z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9; z = (z ^ (z >> 27)) * 0x94D049BB133111EB; z ^ (z >> 31)`.
//! Choices among `k` alternatives take the draw modulo `k`, so a seed replays
//! identically in any language.

use rand_core::{RngCore, SeedableRng};
pub use rand_xoshiro::SplitMix64;

pub fn seeded(seed: u64) -> SplitMix64 {
    SplitMix64::seed_from_u64(seed)
}

/// Uniform-ish index in `0..k` (modulo reduction).
pub fn below(rng: &mut SplitMix64, k: usize) -> usize {
    debug_assert!(k > 0);
    (rng.next_u64() % k as u64) as usize
}

/// Seeds for `n` workers, drawn in order from a generator seeded with `seed`.
pub fn worker_seeds(seed: u64, n: usize) -> Vec<u64> {
    let mut rng = seeded(seed);
    (0..n).map(|_| rng.next_u64()).collect()
}
