//! Deterministic random substreams.
//!
//! Every random draw in a run comes from a ChaCha8 stream keyed by the run
//! seed and selected by a pair of indices, so the outcome of draw `(a, b)`
//! does not depend on which thread produced it or in what order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream for index pair `(a, b)`; distinct for `a, b < 2^32`.
pub fn substream(seed: u64, a: u64, b: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((a << 32) ^ (b & 0xFFFF_FFFF));
    rng
}
