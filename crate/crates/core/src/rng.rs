//! Seed streams. Every random draw in the crate comes from a [`ChaCha8Rng`]
//! seeded by [`stream_seed`], so identical `(master, task)` pairs always
//! reproduce identical draws regardless of scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 finalizer.
pub fn hash64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Child seed for task `task` of master seed `master`:
/// `hash64(master XOR (task + 1) * golden_gamma)`.
pub fn stream_seed(master: u64, task: u64) -> u64 {
    hash64(master ^ task.wrapping_add(1).wrapping_mul(GOLDEN_GAMMA))
}

pub fn stream(master: u64, task: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(stream_seed(master, task))
}
