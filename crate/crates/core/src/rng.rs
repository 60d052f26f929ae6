//! Seed derivation. Every stochastic step draws from its own ChaCha stream
//! keyed by a root seed and a list of stream tags, so results never depend on
//! evaluation order or worker count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mix a root seed with stream tags into a new 64-bit seed.
pub fn derive_seed(root: u64, tags: &[u64]) -> u64 {
    tags.iter()
        .fold(splitmix64(root), |acc, &t| splitmix64(acc ^ splitmix64(t)))
}

pub fn stream(root: u64, tags: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(root, tags))
}

/// Stream tags used across the crate.
pub mod tag {
    pub const SCENE: u64 = 1;
    pub const PERTURB: u64 = 2;
    pub const SAMPLER: u64 = 3;
    pub const SEGMENT: u64 = 4;
    pub const PARTS: u64 = 5;
    pub const COMPLETION: u64 = 6;
    pub const SHELL: u64 = 7;
    pub const TRIAL: u64 = 8;
}
