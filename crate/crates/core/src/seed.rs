//! Deterministic seed derivation so that parallel loops give the same
//! answer regardless of scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StudyRng = ChaCha8Rng;

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for the `index`-th child stream of `master`.
pub fn derive(master: u64, index: u64) -> u64 {
    mix64(master ^ mix64(index.wrapping_add(0xA076_1D64_78BD_642F)))
}

/// Seed derived from a string key (FNV-1a, then mixed).
pub fn derive_str(master: u64, key: &str) -> u64 {
    let mut h: u64 = 0xCBF2_9CE4_8422_2325;
    for b in key.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01B3);
    }
    derive(master, h)
}

pub fn rng(seed: u64) -> StudyRng {
    StudyRng::seed_from_u64(seed)
}
