//! Seed derivation.
//!
//! Every random stream in the crate is a ChaCha20 generator seeded from a
//! 64-bit value. A master seed fans out into sub-seeds with
//! [`derive_seed`]: `derive_seed(master, stream, index)` mixes the three
//! words with the SplitMix64 finalizer, so that one master seed reproduces a
//! whole experiment and distinct `(stream, index)` pairs never share state.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

/// Stream labels used by the pipelines.
pub mod stream {
    pub const DATASET: u64 = 1;
    pub const INIT: u64 = 2;
    pub const NULL_DATA: u64 = 3;
    pub const NULL_INIT: u64 = 4;
    pub const SCENARIO: u64 = 5;
    pub const NOISE: u64 = 6;
}

pub type Rng = ChaCha20Rng;

pub fn rng(seed: u64) -> Rng {
    ChaCha20Rng::seed_from_u64(seed)
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive_seed(master: u64, stream: u64, index: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(master) ^ stream) ^ index.wrapping_mul(0xD6E8_FEB8_6659_FD93))
}
