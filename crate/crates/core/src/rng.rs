//! Seeded randomness.
//!
//! Every random draw in the crate goes through [`ChaCha8Rng`] seeded with
//! `ChaCha8Rng::seed_from_u64`, and integer ranges are produced by
//! [`below`] (Lemire's widening multiply with rejection), so sampled ids and
//! forests are stable across platforms and independent of `rand` releases.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

pub type Rng = ChaCha8Rng;

pub fn seeded(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Seed for parallel unit `unit` of a run seeded with `master` (splitmix64
/// finalizer over both inputs).
pub fn derive_seed(master: u64, unit: u64) -> u64 {
    let mut z = master
        .wrapping_add(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(unit.wrapping_mul(0xBF58_476D_1CE4_E5B9));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Uniform integer in `0..n`. `n` must be non-zero.
pub fn below(rng: &mut Rng, n: usize) -> usize {
    assert!(n > 0, "empty range");
    let n = n as u64;
    let threshold = n.wrapping_neg() % n;
    loop {
        let m = (rng.next_u64() as u128) * (n as u128);
        if (m as u64) >= threshold {
            return (m >> 64) as usize;
        }
    }
}

/// Fisher-Yates shuffle, walking from the back.
pub fn shuffle<T>(rng: &mut Rng, items: &mut [T]) {
    for i in (1..items.len()).rev() {
        let j = below(rng, i + 1);
        items.swap(i, j);
    }
}
