//! Counter-addressed random streams.
//!
//! Every normal draw is addressed by `(seed, replication, step)`: the seed keys
//! a ChaCha20 generator, the replication index selects its 64-bit stream, and
//! the step index is the position inside that stream. Replications therefore
//! never share randomness and can be evaluated in any order.

use rand_chacha::ChaCha20Rng;
use rand_core::{RngCore, SeedableRng};
use serde::{Deserialize, Serialize};

/// Stream id reserved for grid jitter; replication indices must stay below it.
pub const GRID_STREAM: u64 = u64::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct NoiseKey {
    pub seed: u64,
    pub replication: u64,
}

impl NoiseKey {
    pub fn new(seed: u64, replication: u64) -> Self {
        Self { seed, replication }
    }
}

/// Standard normal (and uniform) draws from one addressed stream.
#[derive(Debug, Clone)]
pub struct NormalStream {
    rng: ChaCha20Rng,
}

impl NormalStream {
    pub fn new(key: NoiseKey) -> Self {
        Self::at(key, 0)
    }

    /// Stream positioned so that the next draw is draw number `step`.
    pub fn at(key: NoiseKey, step: u64) -> Self {
        let mut rng = ChaCha20Rng::seed_from_u64(key.seed);
        rng.set_stream(key.replication);
        // One draw consumes one u64, i.e. two 32-bit words.
        rng.set_word_pos(u128::from(step) * 2);
        Self { rng }
    }

    /// Uniform on the open interval (0, 1), 53-bit resolution.
    pub fn next_uniform(&mut self) -> f64 {
        let bits = self.rng.next_u64() >> 11;
        (bits as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }

    /// Standard normal by inversion of the CDF.
    pub fn next_normal(&mut self) -> f64 {
        inverse_normal_cdf(self.next_uniform())
    }
}

/// Quantile function of the standard normal distribution.
pub fn inverse_normal_cdf(p: f64) -> f64 {
    -std::f64::consts::SQRT_2 * statrs::function::erf::erfc_inv(2.0 * p)
}
