//! Deterministic seed derivation.
//!
//! Every random stream in a run is keyed by a master seed plus a short path
//! of integers (purpose tag, round, device, ...). Paths are folded through
//! SplitMix64 so that neighbouring paths give statistically unrelated
//! streams, and each derived seed initialises a ChaCha8 generator.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Purpose tags used as the first element of a derivation path.
pub mod purpose {
    pub const GEOMETRY: u64 = 0x01;
    pub const CHANNEL_DIRECT: u64 = 0x02;
    pub const CHANNEL_DEVICE_RIS: u64 = 0x03;
    pub const CHANNEL_RIS_SERVER: u64 = 0x04;
    pub const ROUND_CHANNELS: u64 = 0x10;
    pub const DATASET: u64 = 0x11;
    pub const PARTITION: u64 = 0x12;
    pub const LOCAL_SGD: u64 = 0x13;
    pub const AIRCOMP_NOISE: u64 = 0x20;
    pub const RANDOMIZATION: u64 = 0x21;
    pub const NOISE_SLOT: u64 = 0x22;
}

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;
const PATH_SALT: u64 = 0xD1B5_4A32_D192_ED03;

/// One SplitMix64 output step.
pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(GOLDEN_GAMMA);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Fold `path` into `master`, one SplitMix64 round per element.
pub fn derive_seed(master: u64, path: &[u64]) -> u64 {
    path.iter().fold(splitmix64(master), |acc, &p| {
        splitmix64(acc ^ p.wrapping_mul(PATH_SALT))
    })
}

pub fn rng_for(master: u64, path: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, path))
}
