//! Seeded random number generation.
//!
//! Every stochastic piece of the pipeline (parameter init, dropout masks,
//! batch shuffling, synthetic data) draws from this wrapper around a
//! counter-based ChaCha stream, so identical seeds reproduce identical
//! value streams on any platform.

use rand::seq::SliceRandom;
use rand::{Rng as _, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

/// Deterministic generator: a seed plus ChaCha8 stream state.
#[derive(Debug, Clone)]
pub struct Rng {
    seed: u64,
    inner: ChaCha8Rng,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Rng {
            seed,
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Uniform draw from [lo, hi).
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        self.inner.gen_range(lo..hi)
    }

    /// Gaussian draw.
    pub fn normal(&mut self, mean: f64, std: f64) -> f64 {
        // std = 0 would make Normal::new panic-free but sampling pointless
        if std == 0.0 {
            return mean;
        }
        Normal::new(mean, std).unwrap().sample(&mut self.inner)
    }

    /// Bernoulli event with probability `p`.
    pub fn happens(&mut self, p: f64) -> bool {
        self.inner.gen::<f64>() < p
    }

    pub fn shuffle<T>(&mut self, xs: &mut [T]) {
        xs.shuffle(&mut self.inner);
    }
}
