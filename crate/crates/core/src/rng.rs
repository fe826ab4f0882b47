//! Seed plumbing. Every stochastic step draws from a ChaCha stream derived
//! from a base seed and a stream tag, so runs are reproducible and a session
//! needs to persist only its base seed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream tags for the independent random streams a session uses.
pub mod stream {
    pub const ENSEMBLE: u64 = 1;
    pub const NETWORK_INIT: u64 = 2;
    pub const PRIMING: u64 = 3;
    pub const UPDATE: u64 = 4;
    pub const RANDOM_QUERY: u64 = 5;
    pub const SURROGATE: u64 = 6;
}

/// SplitMix64 finalizer; decorrelates nearby seeds.
pub fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive_seed(seed: u64, stream: u64, index: u64) -> u64 {
    mix(mix(seed ^ mix(stream)) ^ index)
}

pub fn rng_for(seed: u64, stream: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, stream, index))
}
