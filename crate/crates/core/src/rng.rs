//! Reproducible random streams.
//!
//! Every stochastic routine takes an explicit `(seed, stream)` pair. Stream
//! `i` is the ChaCha8 generator keyed by `seed` with stream id `i`, so the
//! draws of one replication never depend on how many workers ran the others.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

pub fn stream(seed: u64, stream: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
