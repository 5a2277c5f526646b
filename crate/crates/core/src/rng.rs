//! Seeded randomness shared by the random schedule generator and the
//! experiment harness.
//!
//! Every random draw in the crate comes from ChaCha8 (`rand_chacha` 0.3)
//! keyed by a 32-byte seed whose first eight bytes are the little-endian
//! `u64` seed and whose remaining bytes are zero. Independent sub-streams
//! are selected with ChaCha's 64-bit stream id. A `u64` draw becomes a
//! unit-interval float from its top 53 bits, so another implementation of
//! ChaCha8 can replay a run exactly.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub(crate) fn stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(stream);
    rng
}

/// Uniform draw in `[0, 1)`.
pub(crate) fn unit(rng: &mut ChaCha8Rng) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Uniform draw in `[low, high)`.
pub(crate) fn uniform(rng: &mut ChaCha8Rng, low: f64, high: f64) -> f64 {
    low + (high - low) * unit(rng)
}
