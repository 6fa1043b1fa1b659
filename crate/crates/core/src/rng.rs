//! Seeded random streams.
//!
//! Every random draw comes from ChaCha8, a counter-based generator. The
//! 64-bit seed is expanded into the ChaCha key; the 64-bit ChaCha stream id
//! is split as `replication << 20 | component`, so each (replication, curve)
//! pair owns an independent, non-overlapping sequence. Component 0 is the
//! design stream (the `X_i`), component `j + 1` the noise of curve `j`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const DESIGN_COMPONENT: u64 = 0;
const COMPONENT_BITS: u32 = 20;

pub fn stream_id(replication: u64, component: u64) -> u64 {
    debug_assert!(component < (1 << COMPONENT_BITS));
    (replication << COMPONENT_BITS) | component
}

/// Generator for one `(replication, component)` stream under `seed`.
pub fn stream(seed: u64, replication: u64, component: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream_id(replication, component));
    rng
}

/// Noise stream of curve `curve` (0-based).
pub fn noise_stream(seed: u64, replication: u64, curve: usize) -> ChaCha8Rng {
    stream(seed, replication, curve as u64 + 1)
}
