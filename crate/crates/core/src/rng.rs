//! Counter-based random streams.
//!
//! Every random quantity is drawn from a ChaCha stream selected by a
//! `(seed, stream)` pair, so results do not depend on thread scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream selector built from a run index and a point index.
pub fn stream_id(run: u64, point: u64) -> u64 {
    (run << 20) | (point & 0xF_FFFF)
}

pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
