//! Seeded, portable randomness.
//!
//! One generator is fixed project-wide: ChaCha8 (`rand_chacha::ChaCha8Rng`),
//! seeded through `seed_from_u64`. The stream depends only on the seed, not
//! on the platform, so any test that pins a seed pins its data.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Mixing constant for deriving independent streams (2^64 / golden ratio, odd).
const STREAM_MIX: u64 = 0x9e37_79b9_7f4a_7c15;

/// Deterministic pseudorandom generator. Algorithm: ChaCha8.
#[derive(Debug, Clone)]
pub struct SeededRng {
    seed: u64,
    inner: ChaCha8Rng,
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// A generator for an independent substream (fold workers, batch shuffles).
    pub fn derive(&self, stream: u64) -> SeededRng {
        SeededRng::new(self.seed.wrapping_add(stream.wrapping_mul(STREAM_MIX)))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform draw in `[0, 1)` with 53 bits of precision.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Standard normal draw via Box-Muller.
    pub fn normal(&mut self) -> f64 {
        let u1 = 1.0 - self.next_f64(); // (0, 1]
        let u2 = self.next_f64();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    /// Uniform index in `[0, n)` via widening multiply.
    pub fn index(&mut self, n: usize) -> usize {
        assert!(n > 0, "index range must be nonempty");
        ((self.next_u64() as u128 * n as u128) >> 64) as usize
    }

    /// Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, xs: &mut [T]) {
        for i in (1..xs.len()).rev() {
            let j = self.index(i + 1);
            xs.swap(i, j);
        }
    }
}
