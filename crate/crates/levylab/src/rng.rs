//! Deterministic, stream-splittable random number generation.
//!
//! Every estimator draws from ChaCha8 streams derived from a single seed.
//! Parallel estimators split work into a fixed number of chunks, with chunk
//! `i` drawing from stream `base + i`, so results are bit-identical for any
//! worker count.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Number of independent chunks a parallel estimator is split into,
/// regardless of how many workers execute them.
pub const PAR_CHUNKS: u64 = 256;

/// A seeded generator tied to a (seed, stream) pair.
pub type Stream = ChaCha8Rng;

/// Generator for stream `stream` of the experiment seeded with `seed`.
pub fn stream(seed: u64, stream_id: u64) -> Stream {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream_id);
    rng
}

/// Stream ids for the chunks of a parallel estimator occupying the block
/// starting at `base`. Each estimator call site owns a disjoint block of
/// `PAR_CHUNKS` ids.
pub fn chunk_streams(seed: u64, base: u64) -> Vec<Stream> {
    (0..PAR_CHUNKS).map(|i| stream(seed, base + i)).collect()
}
