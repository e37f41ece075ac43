//! Reproducible random-number streams.
//!
//! A stream is identified by `(master_seed, stream_index)`. The generator is
//! ChaCha8 keyed by `master_seed` (expanded with `SeedableRng::seed_from_u64`)
//! with the ChaCha stream id set to `stream_index`, so streams sharing a seed
//! but differing in index are disjoint keystreams.
//!
//! Nested work (a bootstrap iteration inside a simulation replicate) uses
//! [`RngStream::substream`], which derives a fresh master seed from the parent's
//! *origin* by a SplitMix64 mix. The result depends only on the parent's origin
//! and the child index, never on how many values the parent has produced, so
//! parallel schedules reproduce serial output exactly.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone)]
pub struct RngStream {
    rng: ChaCha8Rng,
    master_seed: u64,
    stream_index: u64,
}

impl RngStream {
    pub fn new(master_seed: u64, stream_index: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
        rng.set_stream(stream_index);
        Self {
            rng,
            master_seed,
            stream_index,
        }
    }

    /// `(master_seed, stream_index)` this stream was built from.
    pub fn origin(&self) -> (u64, u64) {
        (self.master_seed, self.stream_index)
    }

    /// Child stream keyed by this stream's origin and `index`.
    pub fn substream(&self, index: u64) -> RngStream {
        RngStream::new(derive_seed(self.master_seed, self.stream_index), index)
    }

    /// A 64-bit seed derived from this stream's origin, for components that
    /// build their own family of streams (e.g. one per bootstrap iteration).
    pub fn child_seed(&self, index: u64) -> u64 {
        derive_seed(derive_seed(self.master_seed, self.stream_index), index)
    }
}

/// SplitMix64 finaliser.
fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub(crate) fn derive_seed(master_seed: u64, stream_index: u64) -> u64 {
    mix64(master_seed ^ mix64(stream_index.wrapping_add(0x632B_E59B_D9B4_E019)))
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.rng.fill_bytes(dst)
    }
}
