//! Seed derivation. Every random site draws from its own ChaCha stream whose
//! seed is a hash of the master seed and a path of integer tags, so adding a
//! new consumer never shifts the draws of an existing one.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Purpose tags for the evaluation harness.
pub mod tag {
    pub const NEGATIVES: u64 = 1;
    pub const AUC_PAIRING: u64 = 2;
    pub const TRAIN_NEGATIVES: u64 = 3;
    pub const TEST_NEGATIVES: u64 = 4;
    pub const MODEL: u64 = 5;
    pub const PROBE: u64 = 6;
}

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes `tags` into `seed`.
pub fn derive(seed: u64, tags: &[u64]) -> u64 {
    tags.iter()
        .fold(splitmix64(seed), |acc, &t| {
            splitmix64(acc.rotate_left(23) ^ splitmix64(t ^ 0xA076_1D64_78BD_642F))
        })
}

pub fn stream(seed: u64, tags: &[u64]) -> Rng {
    Rng::seed_from_u64(derive(seed, tags))
}
