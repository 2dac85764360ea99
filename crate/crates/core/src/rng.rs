//! Deterministic RNG streams.
//!
//! Every random quantity is drawn from a ChaCha8 stream keyed by the master
//! seed, a purpose tag and an index, so results never depend on scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

pub mod tag {
    pub const PROPENSITY: u64 = 1;
    pub const OUTCOME_CHAIN: u64 = 2;
    pub const IMPUTATION: u64 = 3;
    pub const SMOOTHING: u64 = 4;
    pub const BOOTSTRAP: u64 = 5;
    pub const REPLICATE: u64 = 6;
    pub const FROZEN_COVARIATE: u64 = 7;
    pub const ORACLE: u64 = 8;
    pub const STUDY: u64 = 9;
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a child seed from `(seed, tag, index)`.
pub fn derive_seed(seed: u64, tag: u64, index: u64) -> u64 {
    splitmix(splitmix(seed ^ splitmix(tag)).wrapping_add(index))
}

pub fn stream(seed: u64, tag: u64, index: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(splitmix(seed ^ splitmix(tag)));
    rng.set_stream(index);
    rng
}

pub fn from_seed(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
