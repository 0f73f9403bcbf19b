//! Counter-based seed derivation.
//!
//! Every parallel task (a grid cell, a training record, an MC draw) gets its
//! own generator seeded from `(base seed, stream, index)`, so results do not
//! depend on scheduling or thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Stream tags keep the derived seeds of unrelated subsystems apart.
pub mod stream {
    pub const TRAIN_SET: u64 = 1;
    pub const TRAIN_INIT: u64 = 2;
    pub const TRAIN_SHUFFLE: u64 = 3;
    pub const TRAIN_NOISE: u64 = 4;
    pub const PREDICT: u64 = 5;
    pub const GRID: u64 = 6;
    pub const PHANTOM: u64 = 7;
    pub const LOOKUP: u64 = 8;
    pub const SIMULATE: u64 = 9;
}

#[inline]
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes a base seed with a stream tag and an index path.
pub fn derive_seed(seed: u64, stream: u64, path: &[u64]) -> u64 {
    let mut h = splitmix64(seed ^ splitmix64(stream.wrapping_mul(0xA24B_AED4_963E_E407)));
    for &p in path {
        h = splitmix64(h ^ p.wrapping_mul(0x9FB2_1C65_1E98_DF25));
    }
    h
}

pub fn rng_from(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn derived_rng(seed: u64, stream: u64, path: &[u64]) -> Rng {
    rng_from(derive_seed(seed, stream, path))
}
