//! Seeded random streams.
//!
//! Every stochastic routine takes an explicit generator. Independent
//! consumers derive their own stream from a single root seed so that
//! adding draws in one place never shifts the draws seen elsewhere.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type DbnRng = ChaCha8Rng;

/// Generator for `seed`, on the default stream.
pub fn seeded(seed: u64) -> DbnRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Generator for `seed` on an independent sub-stream.
pub fn substream(seed: u64, stream: u64) -> DbnRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Named sub-streams used by the training pipeline.
pub mod streams {
    pub const PRETRAIN: u64 = 1;
    pub const HEAD: u64 = 2;
    pub const FINE_TUNE: u64 = 3;
    pub const SYNTH: u64 = 4;
}
