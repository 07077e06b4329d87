//! Deterministic seed derivation.
//!
//! Every Monte Carlo operation takes an explicit `u64` seed. Replicated
//! experiments derive one independent stream per replicate with
//! [`mix_seed`], so results are bit-identical under any parallel schedule.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// splitmix64 finalizer.
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives the sub-stream seed for `(seed, index)`.
pub fn mix_seed(seed: u64, index: u64) -> u64 {
    splitmix64(splitmix64(seed) ^ splitmix64(index.wrapping_mul(0xa24b_aed4_963e_e407)))
}

/// A seeded generator for one logical stream.
pub fn stream_rng(seed: u64, index: u64) -> ChaCha12Rng {
    ChaCha12Rng::seed_from_u64(mix_seed(seed, index))
}
