//! Deterministic RNG substreams.
//!
//! Every stochastic quantity in the crate is drawn from a ChaCha8 stream keyed
//! by a root seed and a short path of integers (step, task index, response,
//! position, ...). Keys are folded with SplitMix64 finalizers so that nearby
//! paths give unrelated streams. Because a stream depends only on its key,
//! results never depend on evaluation order or worker count.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// RNG type used throughout the crate.
pub type StreamRng = ChaCha8Rng;

/// Domain tags so that streams for different purposes never collide.
pub mod tag {
    /// Task selection.
    pub const TASK: u64 = 0x7461_736b;
    /// Rollout sampling.
    pub const ROLLOUT: u64 = 0x726f_6c6c;
    /// Advantage noise.
    pub const ADVANTAGE_NOISE: u64 = 0x6164_766e;
    /// Per-epoch operator noise.
    pub const EPOCH: u64 = 0x6570_6f63;
    /// Monte Carlo shards.
    pub const MONTE_CARLO: u64 = 0x6d63_6d63;
    /// Zone scatter sampling.
    pub const ZONES: u64 = 0x7a6f_6e65;
}

#[inline]
fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Folds a key path into a single 64-bit seed.
pub fn derive_seed(root: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(splitmix64(root), |acc, &k| splitmix64(acc ^ splitmix64(k)))
}

/// Opens the stream for `(root, path)`.
pub fn substream(root: u64, path: &[u64]) -> StreamRng {
    StreamRng::seed_from_u64(derive_seed(root, path))
}

/// Draws `z ~ U(1 - half_width, 1 + half_width)`. Consumes exactly one `f64`.
#[inline]
pub fn uniform_around_one<R: Rng + ?Sized>(rng: &mut R, half_width: f64) -> f64 {
    let u: f64 = rng.random();
    1.0 - half_width + 2.0 * half_width * u
}
