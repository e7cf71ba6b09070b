//! Deterministic RNG substreams.
//!
//! Every random quantity in an experiment is drawn from a stream addressed by
//! a path in a seed tree: master seed, then experiment, cell, replicate and
//! path labels. A [`StreamKey`] is that address hashed into 64 bits, so any
//! job can build its generator without touching shared state and results do
//! not depend on scheduling order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Generator type handed to engines and samplers.
pub type PathRng = ChaCha8Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct StreamKey(u64);

impl StreamKey {
    pub fn new(master_seed: u64) -> Self {
        StreamKey(mix64(master_seed ^ 0x6A09_E667_F3BC_C908))
    }

    /// Child stream for a numeric label (replicate index, path index, ...).
    pub fn child(self, label: u64) -> Self {
        StreamKey(mix64(self.0 ^ mix64(label.wrapping_add(0x9E37_79B9_7F4A_7C15))))
    }

    /// Child stream for a textual label (experiment or cell name).
    pub fn named(self, label: &str) -> Self {
        self.child(fnv1a64(label.as_bytes()))
    }

    pub fn rng(self) -> PathRng {
        ChaCha8Rng::seed_from_u64(self.0)
    }

    pub fn raw(self) -> u64 {
        self.0
    }
}

fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash = 0xcbf2_9ce4_8422_2325u64;
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(0x0100_0000_01b3);
    }
    hash
}
