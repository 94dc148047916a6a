//! Counter-based random streams.
//!
//! Every random draw in the crate comes from a ChaCha20 stream addressed by
//! `(base seed, lane, index)`. The base seed and lane form the key, the index
//! selects the ChaCha stream, so path `i` of an ensemble is the same no matter
//! which thread generates it or in which order.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

/// Lane identifiers. The low byte is reserved for the vector component.
pub mod lane {
    pub const PATH: u64 = 0x100;
    pub const FRESH: u64 = 0x200;
    pub const THETA: u64 = 0x300;
    pub const MOMENTS: u64 = 0x400;
    pub const BOOTSTRAP: u64 = 0x500;
    pub const ALPHA: u64 = 0x600;
    pub const POINTS: u64 = 0x700;
}

/// Address of one random stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StreamSeed {
    pub base: u64,
    pub lane: u64,
    pub index: u64,
}

impl StreamSeed {
    pub fn new(base: u64, lane: u64, index: u64) -> Self {
        Self { base, lane, index }
    }

    /// Path `index` of the ensemble rooted at `base`.
    pub fn path(base: u64, index: u64) -> Self {
        Self::new(base, lane::PATH, index)
    }

    /// The same stream moved to another lane.
    pub fn with_lane(self, lane: u64) -> Self {
        Self { lane, ..self }
    }

    /// Stream for vector component `i`; components never share a key.
    pub fn component(self, i: usize) -> Self {
        assert!(i < 0x100, "at most 256 components");
        Self {
            lane: (self.lane & !0xff) | i as u64,
            ..self
        }
    }

    pub fn rng(&self) -> ChaCha20Rng {
        stream_rng(self.base, self.lane, self.index)
    }
}

pub fn stream_rng(base: u64, lane: u64, index: u64) -> ChaCha20Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&base.to_le_bytes());
    key[8..16].copy_from_slice(&lane.to_le_bytes());
    key[16..24].copy_from_slice(b"ftlab-v1");
    let mut rng = ChaCha20Rng::from_seed(key);
    rng.set_stream(index);
    rng
}
