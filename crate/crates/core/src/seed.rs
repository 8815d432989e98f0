//! Stable seed derivation. These functions are part of the reproducibility
//! contract: changing them changes every seeded result.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 finalizer.
#[inline]
pub(crate) fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[inline]
pub(crate) fn combine(a: u64, b: u64) -> u64 {
    mix64(a ^ mix64(b.wrapping_add(GOLDEN)))
}

/// Stream seed for a feature set, independent of which node or candidate
/// asks for it.
pub(crate) fn feature_set_seed(seed: u64, features: &[usize]) -> u64 {
    let mut acc = combine(seed, features.len() as u64);
    for &f in features {
        acc = combine(acc, f as u64);
    }
    acc
}

pub(crate) fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Order-independent hash of a real vector's bit patterns under `seed`.
#[inline]
pub(crate) fn hash_row(seed: u64, row: &[f64]) -> u64 {
    let mut acc = 0u64;
    let mut key = GOLDEN;
    for &v in row {
        acc = acc.wrapping_add(mix64(v.to_bits().wrapping_add(key)));
        key = key.wrapping_add(GOLDEN);
    }
    combine(seed, acc ^ row.len() as u64)
}

/// Uniform in the open interval (0, 1) from 52 high bits.
#[inline]
pub(crate) fn unit_open(bits: u64) -> f64 {
    ((bits >> 12) as f64 + 0.5) / (1u64 << 52) as f64
}
