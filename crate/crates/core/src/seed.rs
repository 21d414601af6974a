//! Seed derivation.
//!
//! Every random stream in the crate is a `ChaCha8Rng` whose seed is derived from the run
//! seed plus a stream tag and index, so independent consumers never share a stream.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream tags. Distinct tags give statistically independent seeds.
pub mod stream {
    pub const INIT_POLICY: u64 = 1;
    pub const INIT_VALUE: u64 = 2;
    pub const INIT_RESIDUAL: u64 = 3;
    pub const RL_UPDATE: u64 = 10;
    pub const ROLLOUT_WORKER: u64 = 11;
    pub const EPISODE: u64 = 12;
    pub const SURGERY_BATCH: u64 = 13;
    pub const EVAL: u64 = 20;
    pub const DEMOS: u64 = 30;
    pub const IL_SHUFFLE: u64 = 40;
    pub const THEORY_IL_NOISE: u64 = 50;
    pub const THEORY_RL_NOISE: u64 = 51;
    pub const THEORY_INSTANCE: u64 = 52;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive a child seed from `(base, tag, index)`.
pub fn derive_seed(base: u64, tag: u64, index: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(base) ^ tag.rotate_left(17)) ^ index.rotate_left(41))
}

pub fn rng_from(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
