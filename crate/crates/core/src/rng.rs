//! Seeded, portable random streams.
//!
//! All randomness comes from ChaCha8 so a seed reproduces the same draws on
//! every platform. Independent work items (null samples, shuffles, sweep
//! members) get their own stream derived from `(seed, index)`, which keeps
//! results identical under any degree of parallelism.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// The root stream for `seed`.
pub fn root(seed: u64) -> StreamRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Stream number `index` under `seed`.
pub fn stream(seed: u64, index: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}
