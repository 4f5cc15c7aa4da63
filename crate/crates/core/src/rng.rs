//! Seeded random streams.
//!
//! Every random quantity is drawn from a [`StreamRng`] (ChaCha8, a counter-based
//! generator) seeded with a 64-bit value. Seeds for independent work items are
//! derived with [`mix64`], so trials can run in any order or in parallel and
//! still consume identical streams.
//!
//! Seed derivation: starting from `h = 0`, each word `w` updates
//! `h = splitmix64(h ^ w.wrapping_mul(GOLDEN_GAMMA))`. `splitmix64` is the
//! SplitMix64 output function applied to `x + GOLDEN_GAMMA`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::Real;

pub const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

pub type StreamRng = ChaCha8Rng;

/// One step of SplitMix64: advance by the golden gamma and finalize.
#[inline]
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(GOLDEN_GAMMA);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Folds a sequence of words into one 64-bit seed.
pub fn mix64(words: &[u64]) -> u64 {
    words
        .iter()
        .fold(0u64, |h, &w| splitmix64(h ^ w.wrapping_mul(GOLDEN_GAMMA)))
}

pub fn stream(seed: u64) -> StreamRng {
    StreamRng::seed_from_u64(seed)
}

#[inline]
pub fn standard_normal<T: Real, R: Rng + ?Sized>(rng: &mut R) -> T {
    T::lit(rng.sample::<f64, _>(StandardNormal))
}

/// Domain tags keep seeds for different purposes apart.
pub mod tags {
    pub const POOL: u64 = 0x504F_4F4C;
    pub const SIGNAL: u64 = 0x5349_474E;
    pub const NOISE: u64 = 0x4E4F_4953;
    pub const SUBSET: u64 = 0x5355_4253;
    pub const MASK: u64 = 0x4D41_534B;
}
