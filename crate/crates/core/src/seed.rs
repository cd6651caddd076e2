//! Deterministic seed derivation for independent random streams.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Folds a sequence of integers into one 64-bit seed.
pub fn derive_seed(parts: &[u64]) -> u64 {
    parts.iter().fold(0x6A09_E667_F3BC_C908, |acc, &p| mix(acc ^ mix(p)))
}

pub fn stream(parts: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(parts))
}

/// Stream tags, so stages seeded from the same run seed stay independent.
pub mod tag {
    pub const WALKS: u64 = 1;
    pub const SKIPGRAM: u64 = 2;
    pub const PRETRAIN: u64 = 3;
    pub const FINETUNE_INIT: u64 = 4;
    pub const FINETUNE_TRAIN: u64 = 5;
    pub const SPLIT: u64 = 6;
    pub const SBM: u64 = 7;
}
