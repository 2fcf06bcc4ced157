//! Seeded random streams.
//!
//! A run owns one root seed. Consumers draw from named substreams whose seeds
//! are derived by hashing `(root, name)`, so adding a new consumer never
//! shifts the numbers another consumer sees.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Stream = ChaCha8Rng;

/// Deterministic substream for `name` under the root `seed`.
pub fn substream(seed: u64, name: &str) -> Stream {
    Stream::seed_from_u64(mix(seed, name))
}

/// Stream seeded directly from an integer.
pub fn stream(seed: u64) -> Stream {
    Stream::seed_from_u64(seed)
}

// FNV-1a over the name, folded with a splitmix64 finaliser of the root seed.
fn mix(seed: u64, name: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in name.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    let mut z = seed ^ h;
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
