//! Counter-based randomness.
//!
//! Every draw is addressed by `(seed, stream, counter)`. A ChaCha8 generator is
//! keyed by the seed, its stream id is set to `stream` and its word position is
//! set from `counter`, so any sample can be reproduced without replaying the
//! ones before it.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Words reserved per counter value. One counter slot can feed this many
/// `u32` draws before it would overlap the next slot.
const WORDS_PER_COUNTER: u128 = 1 << 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct RngKey {
    pub seed: u64,
    pub stream: u64,
    pub counter: u64,
}

impl RngKey {
    pub fn new(seed: u64, stream: u64, counter: u64) -> Self {
        Self { seed, stream, counter }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut r = ChaCha8Rng::seed_from_u64(self.seed);
        r.set_stream(self.stream);
        r.set_word_pos(self.counter as u128 * WORDS_PER_COUNTER);
        r
    }

    /// A uniform draw in `[0, 1)` from this key.
    pub fn uniform(&self) -> f64 {
        self.rng().gen::<f64>()
    }

    pub fn next_u64(&self) -> u64 {
        self.rng().next_u64()
    }
}

/// Derive a child seed from a parent seed and a tag; used to give independent
/// sub-experiments their own seed space.
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    RngKey::new(seed, 0x5eed_0000_0000_0000 ^ tag, 0).next_u64()
}
