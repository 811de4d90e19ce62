//! Seed derivation for independent random streams.
//!
//! Every stochastic component (safety car, per-car lap noise, opponent
//! strategy draws, policy exploration) gets its own ChaCha stream keyed by the
//! race seed and a stream label, so consuming randomness in one stream never
//! shifts another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Stream labels. Values are part of the reproducibility contract.
pub mod stream {
    pub const SAFETY_CAR: u64 = 0x5afe;
    pub const CAR_NOISE: u64 = 0xca70;
    pub const FIELD: u64 = 0xf1e1d;
    pub const POLICY: u64 = 0x9011c7;
    pub const RACE: u64 = 0x7ace;
    pub const TRAIN: u64 = 0x7a17;
    pub const INIT: u64 = 0x1417;
    pub const CALIBRATE: u64 = 0xca1b;
    pub const EVAL: u64 = 0xe7a1;
    pub const VALIDATE: u64 = 0x7a1d;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mixes a base seed with a path of labels into a new 64-bit seed.
pub fn derive_seed(seed: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(splitmix64(seed), |acc, &p| splitmix64(acc ^ splitmix64(p)))
}

pub fn stream_rng(seed: u64, path: &[u64]) -> StreamRng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, path))
}

/// Stable 64-bit hash of a string, used to key streams by model name.
pub fn label_hash(label: &str) -> u64 {
    label.bytes().fold(0xcbf2_9ce4_8422_2325_u64, |h, b| {
        (h ^ b as u64).wrapping_mul(0x100_0000_01b3)
    })
}
