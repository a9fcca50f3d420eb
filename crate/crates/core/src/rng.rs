//! Seed splitting.
//!
//! Every random stream is a ChaCha8 generator keyed by the master seed
//! (expanded with `SeedableRng::seed_from_u64`) and selected by a 64-bit
//! stream index. Replica `i` of an experiment uses stream `i`; auxiliary
//! computations use indices from [`AUX_STREAM_BASE`] upwards so they never
//! collide with replica streams.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

pub const AUX_STREAM_BASE: u64 = 1 << 62;

pub fn stream(master_seed: u64, index: u64) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(index);
    rng
}

/// Derives a fresh 64-bit seed for a nested computation from a generator.
pub fn child_seed<R: rand::Rng + ?Sized>(rng: &mut R) -> u64 {
    rng.random()
}
