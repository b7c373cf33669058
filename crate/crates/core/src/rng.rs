//! Seeded random sources and deterministic seed splitting.
//!
//! Every worker owns its generator. Child seeds are derived from a parent
//! seed and a path of stream indices with SplitMix64, so realization `i`
//! and time step `k` always get the same stream regardless of scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The generator used everywhere in the crate.
pub type RandomSource = ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a child seed: `h = splitmix(seed)`, then for each stream index
/// `h = splitmix(h ^ splitmix(index + 1))`.
pub fn derive_seed(seed: u64, path: &[u64]) -> u64 {
    path.iter().fold(splitmix64(seed), |h, &i| {
        splitmix64(h ^ splitmix64(i.wrapping_add(1)))
    })
}

pub fn rng_from_seed(seed: u64) -> RandomSource {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn child_rng(seed: u64, path: &[u64]) -> RandomSource {
    rng_from_seed(derive_seed(seed, path))
}

/// Well-known stream tags so different stages never share a stream.
pub mod stream {
    pub const SIMULATION: u64 = 1;
    pub const TRACKER: u64 = 2;
    pub const BASELINE: u64 = 3;
    pub const VALIDATION: u64 = 4;
}
