//! Deterministic random-number streams.
//!
//! All randomness in the crate flows through ChaCha8 streams derived from
//! a user seed plus a path of stream words (e.g. `[REPLICA, 3, MASK]`).
//! Two different paths never collide in practice because the path words are
//! folded through splitmix64, and the same `(seed, path)` always reproduces
//! the same stream. Determinism is promised within a build, not across
//! implementations.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Stream words for the top-level purposes. Sub-purposes extend the path.
pub mod stream {
    pub const TRUTH: u64 = 0x01;
    pub const NOISE_TENSOR: u64 = 0x02;
    pub const NOISE_MATRIX: u64 = 0x03;
    pub const MASK: u64 = 0x04;
    pub const REPLICA: u64 = 0x05;
    pub const RESTART: u64 = 0x06;
    pub const RTPM_START: u64 = 0x07;
    pub const SVD: u64 = 0x08;
    pub const FIT: u64 = 0x09;
    pub const ABLATION: u64 = 0x0a;
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Fold a stream path into a single 64-bit word.
pub fn derive(seed: u64, path: &[u64]) -> u64 {
    let mut h = splitmix64(seed);
    for &w in path {
        h = splitmix64(h ^ w);
    }
    h
}

/// The RNG for a given `(seed, path)` stream.
pub fn stream_rng(seed: u64, path: &[u64]) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(derive(seed, path));
    rng.set_stream(derive(seed, path).wrapping_add(1));
    rng
}

/// One standard-normal draw.
pub fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// A vector of standard-normal draws.
pub fn normal_vec(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
    (0..len).map(|_| normal(rng)).collect()
}
