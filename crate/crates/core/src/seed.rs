//! Counter-based seed derivation.
//!
//! Every random stream in the crate is seeded with `derive_seed(root, tags)`:
//! starting from `root`, each tag is folded in as `h = splitmix64(h ^ splitmix64(tag))`.
//! Tags are small integers naming the purpose (see the `TAG_*` constants) followed by
//! run coordinates such as model size and repetition index.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const TAG_SPLIT: u64 = 1;
pub const TAG_BLUP: u64 = 2;
pub const TAG_AUTOENCODER: u64 = 3;
pub const TAG_CLASSIFIER: u64 = 4;
pub const TAG_SYNTH: u64 = 5;

pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive_seed(root: u64, tags: &[u64]) -> u64 {
    tags.iter().fold(splitmix64(root), |h, t| splitmix64(h ^ splitmix64(*t)))
}

pub fn rng_for(root: u64, tags: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(root, tags))
}
