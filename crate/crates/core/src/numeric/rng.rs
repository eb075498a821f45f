//! Seeded, portable random streams.
//!
//! Every stream is a ChaCha8 keystream keyed by the run seed; distinct purposes
//! (initialization, dropout, shuffling, synthetic data) select distinct ChaCha
//! stream ids, so they never overlap and do not perturb one another. ChaCha is
//! counter based and defined purely in terms of 32-bit integer arithmetic, so a
//! given `(seed, purpose)` produces the same sequence on every platform.

use rand::{Rng as _, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// What a random stream is used for. Each purpose maps to a fixed stream id.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Purpose {
    Init,
    Dropout,
    Shuffle,
    Data,
    Noise,
    Custom(u32),
}

impl Purpose {
    fn stream_id(self) -> u64 {
        match self {
            Purpose::Init => 1,
            Purpose::Dropout => 2,
            Purpose::Shuffle => 3,
            Purpose::Data => 4,
            Purpose::Noise => 5,
            Purpose::Custom(k) => 0x1_0000_0000 | u64::from(k),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Rng {
    seed: u64,
    inner: ChaCha8Rng,
}

impl Rng {
    /// Root stream for `seed`.
    pub fn new(seed: u64) -> Self {
        Self { seed, inner: ChaCha8Rng::seed_from_u64(seed) }
    }

    /// Independent stream derived from `seed` for the given purpose.
    pub fn stream(seed: u64, purpose: Purpose) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(purpose.stream_id());
        Self { seed, inner }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform in [0, 1).
    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    /// Uniform in [lo, hi).
    pub fn uniform_in(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Standard normal via Box–Muller (one draw per call, the pair's sine half is discarded).
    pub fn normal(&mut self) -> f64 {
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    /// Uniform integer in [0, n).
    pub fn below(&mut self, n: usize) -> usize {
        self.inner.random_range(0..n)
    }

    /// Fisher–Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_stream() {
        let mut a = Rng::stream(42, Purpose::Init);
        let mut b = Rng::stream(42, Purpose::Init);
        for _ in 0..1000 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
    }

    #[test]
    fn purposes_are_distinct() {
        let mut a = Rng::stream(42, Purpose::Init);
        let mut b = Rng::stream(42, Purpose::Dropout);
        let xs: Vec<u64> = (0..16).map(|_| a.next_u64()).collect();
        let ys: Vec<u64> = (0..16).map(|_| b.next_u64()).collect();
        assert_ne!(xs, ys);
    }

    #[test]
    fn frozen_first_values() {
        // Portability guard: these words are fixed by ChaCha8 and the seed expansion.
        assert_eq!(Rng::new(0).next_u64(), 13080132717333068652);
        let mut s = Rng::stream(42, Purpose::Init);
        assert_eq!(s.next_u64(), 13222472167927179408);
        assert_eq!(s.uniform(), 0.16691033976292213);
    }

    #[test]
    fn normal_moments() {
        let mut r = Rng::stream(3, Purpose::Noise);
        let n = 200_000;
        let xs: Vec<f64> = (0..n).map(|_| r.normal()).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
        assert!(mean.abs() < 0.01, "{mean}");
        assert!((var - 1.0).abs() < 0.02, "{var}");
    }
}
