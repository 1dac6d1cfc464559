//! Seeded RNG plumbing.
//!
//! A run owns a single master seed; every stochastic step (perturbation,
//! splitting, bootstraps, parameter init, ...) derives its own stream seed
//! from it via [`derive_seed`]. Adding or reordering steps therefore never
//! shifts the draws of an unrelated step. ChaCha8 is used everywhere because
//! its output is identical across platforms.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream tags, one per stochastic pipeline step.
pub mod stream {
    pub const PERTURB: u64 = 1;
    pub const SPLIT: u64 = 2;
    pub const RF_BOOTSTRAP: u64 = 3;
    pub const FAIM_INIT: u64 = 4;
    pub const FAM_INIT: u64 = 5;
    pub const AUDIT: u64 = 6;
    pub const SYNTH: u64 = 7;
    pub const MAPPER_INIT: u64 = 8;
}

/// splitmix64 finalizer; decorrelates nearby seed values.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for one named stream of a run.
pub fn derive_seed(master: u64, stream_tag: u64) -> u64 {
    splitmix64(master ^ stream_tag.wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

pub fn rng_from(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
