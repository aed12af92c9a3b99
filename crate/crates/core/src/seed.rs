//! Seed derivation.
//!
//! A single master seed drives every random choice in the pipeline. Each consumer
//! derives its own stream from `(master, key)` where `key` names the stage
//! (`"balance"`, `"split"`, `"train"`, ...), so changing how one stage draws
//! numbers never shifts the others.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::embed::fnv1a64;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive a child seed from a master seed and a stage key.
pub fn derive_seed(master: u64, key: &str) -> u64 {
    splitmix64(master ^ splitmix64(fnv1a64(key.as_bytes())))
}

/// Derive a child seed from a master seed and an index (tree number, class index).
pub fn derive_indexed(master: u64, index: u64) -> u64 {
    splitmix64(master.wrapping_add(splitmix64(index.wrapping_add(1))))
}

pub fn rng_from(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
