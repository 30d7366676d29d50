//! Keyed, counter-based random streams.
//!
//! A [`RngStream`] is a plain value `(seed, stream_id)`. It is expanded into a
//! ChaCha8 generator keyed by `seed` and positioned on the 64-bit ChaCha stream
//! `stream_id`, so distinct pairs address disjoint keystreams and identical
//! pairs replay the same sequence. Parallel work never shares a generator: each
//! task derives its own child stream from its index.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Generator type produced by [`RngStream::rng`].
pub type StreamRng = ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngStream {
    pub seed: u64,
    pub stream_id: u64,
}

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

/// SplitMix64 finalizer.
#[inline]
pub(crate) fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        Self { seed, stream_id }
    }

    /// Root stream (`stream_id = 0`) for a seed.
    pub fn from_seed(seed: u64) -> Self {
        Self::new(seed, 0)
    }

    /// Child stream for task `index`. Same seed, new stream id.
    #[inline]
    pub fn derive(&self, index: u64) -> Self {
        let id = mix64(self.stream_id.wrapping_mul(GOLDEN) ^ mix64(index.wrapping_add(GOLDEN)));
        Self::new(self.seed, id)
    }

    /// Child stream keyed by a label, for separating the roles of draws
    /// (outer points, inner points, disorder) under one parent.
    pub fn derive_named(&self, label: &str) -> Self {
        // FNV-1a, stable across platforms and releases.
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for b in label.bytes() {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
        self.derive(h)
    }

    /// Materialize the generator.
    #[inline]
    pub fn rng(&self) -> StreamRng {
        let mut r = ChaCha8Rng::seed_from_u64(self.seed);
        r.set_stream(self.stream_id);
        r
    }

    /// 64-bit identifier of the lineage, recorded in every estimate.
    pub fn fingerprint(&self) -> u64 {
        mix64(self.seed ^ mix64(self.stream_id.wrapping_add(GOLDEN)))
    }
}
