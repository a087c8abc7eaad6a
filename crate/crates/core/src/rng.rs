//! Seeded random streams.
//!
//! All randomness comes from ChaCha8 keyed by the run seed. Independent
//! consumers (ground truth, each environment's samples, each environment's
//! split, model initialisation, ...) read from distinct ChaCha stream ids, so
//! generating environment 17 never depends on whether environment 16 was
//! generated first.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream families. The discriminant occupies the high bits of the stream id.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Domain {
    GroundTruth = 1,
    EnvSamples = 2,
    Split = 3,
    Unseen = 4,
    ModelInit = 5,
    Batching = 6,
    Evaluation = 7,
    Theory = 8,
}

pub fn substream(seed: u64, domain: Domain, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((domain as u64) << 48) | (index & ((1 << 48) - 1)));
    rng
}
