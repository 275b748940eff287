//! Deterministic seeded randomness with named substreams.
//!
//! Every random quantity in the crate is drawn through a [`SeededStream`],
//! a `(seed, stream_id)` pair mapped to a ChaCha8 generator. The mapping is
//! fixed and documented here because emitted artifacts must be bit-identical
//! across runs and thread counts:
//!
//! * `mix64` is the SplitMix64 finalizer (Steele, Lea and Flood 2014).
//! * `hash2(a, b) = mix64(a ^ mix64(b ^ GOLDEN))` combines two words.
//! * The 256-bit ChaCha key of stream `(seed, id)` consists of the four
//!   little-endian words `hash2(seed, id ^ (i+1)*GOLDEN)`, `i = 0..4`.
//! * Per-trial substreams use `stream_id = hash2(trial_index, view_index)`;
//!   further children come from [`SeededStream::derive`] with a fixed tag.
//!
//! Workers never share a generator: each trial owns streams with distinct
//! ids, so fan-out order and `--threads` cannot change any drawn value.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 finalizer.
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mix two words into one; the second argument is salted so that
/// `hash2(a, 0) != mix64(a)` in general.
fn hash2(a: u64, b: u64) -> u64 {
    mix64(a ^ mix64(b ^ GOLDEN))
}

/// Identifier of an independent random stream under a fixed seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeededStream {
    pub seed: u64,
    pub stream_id: u64,
}

impl SeededStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        SeededStream { seed, stream_id }
    }

    /// Stream assigned to one trial component; `view_index` distinguishes
    /// per-view draws inside a trial (0 is conventionally the shared draw).
    pub fn for_trial(seed: u64, trial_index: u64, view_index: u64) -> Self {
        SeededStream {
            seed,
            stream_id: hash2(trial_index, view_index),
        }
    }

    /// Child stream with the same seed and a tagged id.
    pub fn derive(&self, tag: u64) -> Self {
        SeededStream {
            seed: self.seed,
            stream_id: hash2(self.stream_id, tag),
        }
    }

    /// Instantiate the generator for this stream.
    pub fn rng(&self) -> ChaCha8Rng {
        let mut key = [0u8; 32];
        for i in 0..4u64 {
            let word = hash2(self.seed, self.stream_id ^ (i + 1).wrapping_mul(GOLDEN));
            key[(i as usize) * 8..(i as usize + 1) * 8].copy_from_slice(&word.to_le_bytes());
        }
        ChaCha8Rng::from_seed(key)
    }
}
