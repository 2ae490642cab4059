//! Reproducible random streams.
//!
//! ChaCha is counter based: a `(seed, stream)` pair addresses an independent
//! sequence, so trial `i` of an experiment always sees the same draws no
//! matter which thread runs it or in what order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

pub fn seeded_rng(seed: u64) -> SimRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Generator for trial `trial` of an experiment seeded with `master_seed`.
pub fn trial_rng(master_seed: u64, trial: u64) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(trial);
    rng
}
