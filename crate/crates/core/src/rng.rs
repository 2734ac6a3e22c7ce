//! Seed-splittable random streams.
//!
//! Every consumer derives its generator from a master seed plus a stream id, so
//! replicates, folds and initializations can run in any order and stay reproducible.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream ids for the different consumers of randomness.
pub mod streams {
    pub const PREDICTORS: u64 = 1;
    pub const NOISE: u64 = 2;
    pub const SPLIT: u64 = 3;
    pub const INIT: u64 = 4;
    pub const MINIBATCH: u64 = 5;
    pub const FOLDS: u64 = 6;
}

pub fn stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Child seed for replicate `index` of a run with master seed `seed`.
pub fn child_seed(seed: u64, index: u64) -> u64 {
    // splitmix64 finalizer over the pair
    let mut z = seed ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
