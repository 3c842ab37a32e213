//! Deterministic per-item random streams.
//!
//! Every independently processed item (a dataset sample, an evaluation
//! sample) draws from its own ChaCha stream keyed by `(seed, key)`, so the
//! results do not depend on processing order or thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// FNV-1a over the key bytes, folded with the seed and finished with a
/// splitmix64 round.
pub fn derive_seed(seed: u64, key: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in seed.to_le_bytes().iter().chain(key.as_bytes()) {
        h ^= *b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    splitmix64(h)
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn stream(seed: u64, key: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, key))
}
