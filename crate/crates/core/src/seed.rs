//! Deterministic seed derivation so every random stream is reproducible from
//! one run seed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive_seed(base: u64, parts: &[u64]) -> u64 {
    parts
        .iter()
        .fold(splitmix64(base), |acc, &p| splitmix64(acc ^ splitmix64(p)))
}

pub fn rng_for(base: u64, parts: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(base, parts))
}

/// Stream tags keep derived seeds for different purposes apart.
pub mod tag {
    pub const UNIT_INIT: u64 = 1;
    pub const TRAIN: u64 = 2;
    pub const KMEANS: u64 = 3;
    pub const BASIS_PAD: u64 = 4;
    pub const QUERIES: u64 = 5;
    pub const QUERY_WINDOWS: u64 = 6;
    pub const SYNTH: u64 = 7;
    pub const SHUFFLE: u64 = 8;
}
