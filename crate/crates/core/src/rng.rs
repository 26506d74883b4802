//! Counter-based random streams keyed by `(seed, stage, index)`, so that every
//! walk, orbit or bootstrap replicate can be replayed on its own and results do
//! not depend on how work is split between threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u64)]
pub enum Stage {
    Sample = 1,
    Orbit = 2,
    Lyapunov = 3,
    Branches = 4,
    Dimension = 5,
    Verify = 6,
}

/// Independent generator for item `index` of `stage`.
pub fn stream(seed: u64, stage: Stage, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((stage as u64) << 56) ^ index);
    rng
}
