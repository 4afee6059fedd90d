//! Seed-derived PRNG streams.
//!
//! All randomness in a run flows from a single seed; independent consumers
//! (weight init, shuffling, dropout, synthesis) get their own streams so
//! adding one consumer never perturbs another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e3779b97f4a7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d049bb133111eb);
    x ^ (x >> 31)
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

/// Derive a sub-stream seed from (run seed, purpose tag, index).
pub fn derive_seed(seed: u64, tag: &str, index: u64) -> u64 {
    splitmix64(seed ^ splitmix64(fnv1a(tag.as_bytes()) ^ splitmix64(index)))
}

/// A seeded stream for the given purpose.
pub fn stream(seed: u64, tag: &str, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, tag, index))
}
