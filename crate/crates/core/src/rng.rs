//! Seed derivation.
//!
//! Every random stream in a run is a `ChaCha8Rng` seeded from the master seed
//! and a path of integer labels (round, client id, purpose). Results never
//! depend on the order in which streams are consumed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

/// Stream purposes mixed into derived seeds.
pub mod stream {
    pub const SPLIT: u64 = 1;
    pub const MODEL_INIT: u64 = 2;
    pub const ENCODER: u64 = 3;
    pub const TAU: u64 = 4;
    pub const CLIENT_SAMPLING: u64 = 5;
    pub const LOCAL_TRAINING: u64 = 6;
    pub const SANITIZE: u64 = 7;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive_seed(seed: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(splitmix64(seed), |acc, &label| splitmix64(acc ^ splitmix64(label)))
}

pub fn rng_for(seed: u64, path: &[u64]) -> SimRng {
    SimRng::seed_from_u64(derive_seed(seed, path))
}
