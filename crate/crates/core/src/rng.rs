//! Reproducible random streams.
//!
//! Every stream is a ChaCha20 generator keyed by the scenario seed; the
//! 64-bit stream id selects an independent keystream, so parallel runs never
//! overlap.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

pub type SimRng = ChaCha20Rng;

pub fn stream(seed: u64, id: u64) -> SimRng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Stream driving the world (regimes and observations) of simulation `run`.
pub fn world_stream(seed: u64, run: u64) -> SimRng {
    stream(seed, run << 16)
}

/// Stream the randomized agent uses to sample actions in simulation `run`
/// under the `budget_index`-th budget.
pub fn policy_stream(seed: u64, run: u64, budget_index: u64) -> SimRng {
    debug_assert!(budget_index < 0xffff);
    stream(seed, (run << 16) | (budget_index + 1))
}
