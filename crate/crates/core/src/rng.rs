//! Portable seeded randomness.
//!
//! Every random stream in the crate is a xoshiro256** generator whose state is
//! expanded from a 64-bit seed with splitmix64. Independent streams are keyed
//! by a master seed plus a list of integer tags (episode index, class,
//! distribution index, ...), so results do not depend on scheduling order or
//! worker count. Normal variates use the ziggurat sampler from `rand_distr`.

use rand::SeedableRng;
use rand_xoshiro::Xoshiro256StarStar;

pub type Rng = Xoshiro256StarStar;

/// Tags separating the purposes a stream can serve.
pub(crate) mod tag {
    pub const EPISODE: u64 = 0x45_50_49_53;
    pub const SAMPLER: u64 = 0x53_41_4d_50;
    pub const OPTIMIZER: u64 = 0x4f_50_54_49;
    pub const RETRIEVE: u64 = 0x52_45_54_52;
    pub const CHANCE: u64 = 0x43_48_41_4e;
    pub const SYNTH: u64 = 0x53_59_4e_54;
}

/// splitmix64 output function.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Folds `tags` into `seed`, yielding a well-mixed derived seed.
pub fn derive_seed(seed: u64, tags: &[u64]) -> u64 {
    tags.iter()
        .fold(splitmix64(seed), |acc, &t| splitmix64(acc ^ splitmix64(t)))
}

/// Generator for the stream identified by `(seed, tags)`.
pub fn stream(seed: u64, tags: &[u64]) -> Rng {
    Rng::seed_from_u64(derive_seed(seed, tags))
}
