//! Seeded random streams.
//!
//! Every stochastic component draws from ChaCha8 (`rand_chacha`) seeded via
//! `seed_from_u64`. Independent streams are derived from a master seed with the
//! SplitMix64 finalizer, so a bank or an experiment can be rebuilt from
//! `(master_seed, config)` alone.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

pub fn rng(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// SplitMix64 output function applied to `master + (stream + 1) * golden`.
pub fn derive_seed(master: u64, stream: u64) -> u64 {
    let mut z = master.wrapping_add(stream.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
