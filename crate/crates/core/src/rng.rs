//! Seed plumbing. Every random draw in the crate comes from a ChaCha stream
//! seeded through here, so results depend only on the configured seeds.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// SplitMix64 finalizer.
pub fn mix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Independent sub-seed for one consumer of a run seed.
pub fn derive_seed(run_seed: u64, stream: Stream) -> u64 {
    mix64(mix64(run_seed) ^ stream as u64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Graph = 0x6772_6170_68,
    Split = 0x7370_6c69_74,
    Params = 0x7061_7261_6d,
}
