//! Deterministic seed derivation.
//!
//! Every random stream in the crate is a `ChaCha8Rng` whose seed is derived
//! from a base seed plus a content tag, so that the same logical
//! computation (same trial, same assignment, same decoding order) always
//! sees the same stream regardless of evaluation order or thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes `words` into `base`, order-sensitively.
pub fn derive(base: u64, words: &[u64]) -> u64 {
    words
        .iter()
        .fold(splitmix64(base), |acc, &w| splitmix64(acc ^ splitmix64(w)))
}

/// Seed of Monte-Carlo trial `index` under `base`.
pub fn trial_seed(base: u64, index: usize) -> u64 {
    derive(base, &[0x7472_6961_6c00, index as u64])
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Tag an FNV-1a digest of a string; used to label stages.
pub fn tag(label: &str) -> u64 {
    label
        .bytes()
        .fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
}
