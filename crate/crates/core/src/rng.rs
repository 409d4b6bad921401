//! Labeled random streams derived from one master seed.
//!
//! Every subsystem (and every agent) draws from its own ChaCha stream so that
//! adding agents of one kind does not shift the draws of another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// FNV-1a, fixed so stream ids never change between builds.
fn label_hash(label: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

/// Stream for `label` under `seed`.
pub fn stream(seed: u64, label: &str) -> ChaCha8Rng {
    indexed_stream(seed, label, 0)
}

/// Stream for the `index`-th member of the `label` family.
pub fn indexed_stream(seed: u64, label: &str, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(label_hash(label) ^ index.wrapping_mul(0x9e37_79b9_7f4a_7c15));
    rng
}
