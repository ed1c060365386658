//! Seed derivation.
//!
//! Every random decision in a run draws from its own ChaCha stream whose seed
//! is derived from the run seed plus a tag path (purpose, client, experience,
//! round, ...). Streams never share state, so adding or removing draws in one
//! place cannot shift the numbers seen anywhere else.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

/// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn tag_hash(tag: &str) -> u64 {
    // FNV-1a; stable across platforms and releases.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in tag.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Derive a child seed from `base`, a purpose tag and a list of indices.
pub fn derive_seed(base: u64, tag: &str, path: &[u64]) -> u64 {
    let mut s = mix(base ^ mix(tag_hash(tag)));
    for &p in path {
        s = mix(s ^ mix(p.wrapping_add(0x632B_E59B_D9B4_E019)));
    }
    s
}

pub fn stream(base: u64, tag: &str, path: &[u64]) -> SimRng {
    SimRng::seed_from_u64(derive_seed(base, tag, path))
}
