//! Deterministic random streams.
//!
//! Every consumer of randomness gets its own ChaCha stream keyed by the
//! master seed and a `(purpose, generation, slot)` triple, so results do not
//! depend on the order in which concurrent work is scheduled.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum Purpose {
    Proposal = 1,
    Evaluation = 2,
    Tuning = 3,
    Split = 4,
    Data = 5,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RngStream {
    pub seed: u64,
    pub purpose: Purpose,
    pub generation: u32,
    pub slot: u32,
}

impl RngStream {
    pub fn new(seed: u64, purpose: Purpose, generation: u32, slot: u32) -> Self {
        RngStream { seed, purpose, generation, slot }
    }

    pub fn stream_id(&self) -> u64 {
        ((self.purpose as u64) << 56) | ((self.generation as u64 & 0x00ff_ffff) << 32) | self.slot as u64
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream_id());
        rng
    }

    /// A 64-bit seed derived from this stream, for consumers that seed their
    /// own generators (k-means initialisation, fold shuffling).
    pub fn derive_seed(&self) -> u64 {
        use rand::RngCore;
        self.rng().next_u64()
    }
}
