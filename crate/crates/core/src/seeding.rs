//! Deterministic seed derivation.
//!
//! Every randomized operation is a pure function of its inputs and a seed.
//! One portable, documented generator (ChaCha8) is used everywhere, and
//! consumers derive independent streams from a master seed with
//! [`derive_seed`], so rounds can be built and replayed independently and
//! in parallel without sharing generator state.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream tags decorrelating the consumers of one master seed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stream {
    /// Source-dataset splitting.
    Split = 1,
    /// Label corruption.
    LabelFlip = 2,
    /// Defender training.
    Train = 3,
    /// LTU round construction (indexed by round).
    Round = 4,
    /// Attacker randomness (indexed by round).
    Attack = 5,
    /// Per-trial master seeds (indexed by trial).
    Trial = 6,
    /// Synthetic data generation.
    Blobs = 7,
    /// Per-sample individual privacy scoring (indexed by sample).
    Individual = 8,
}

const GOLDEN_GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;

/// SplitMix64 finalizer; bijective on u64.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN_GAMMA);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed for the `index`-th element of `stream` under `master`.
pub fn derive_seed(master: u64, stream: Stream, index: u64) -> u64 {
    mix(mix(master ^ mix(stream as u64)) ^ index)
}

/// The one PRNG used across the crate.
pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
