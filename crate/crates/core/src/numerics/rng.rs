use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::Tensor;
use crate::error::{Error, Result};

/// ChaCha8 stream seeded from a `u64`. The stream is fixed by the algorithm,
/// so equal seeds give equal draws on every platform.
#[derive(Debug, Clone)]
pub struct SimRng(ChaCha8Rng);

impl SimRng {
    pub fn new(seed: u64) -> Self {
        SimRng(ChaCha8Rng::seed_from_u64(seed))
    }

    /// Independent child stream, keyed by `tags` (e.g. round and client index).
    pub fn derive(seed: u64, tags: &[u64]) -> Self {
        Self::new(derive_seed(seed, tags))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.0.random()
    }

    /// One draw from `[0, 1)`.
    pub fn unit(&mut self) -> f64 {
        self.0.random::<f64>()
    }

    pub fn normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.0)
    }

    /// Uniform integer in `0..n`.
    pub fn below(&mut self, n: usize) -> usize {
        self.0.random_range(0..n)
    }

    /// Fisher-Yates shuffle driven by this stream.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }

    /// I.i.d. samples from `[lo, hi)` filling a tensor of the given shape.
    pub fn sample_uniform(&mut self, lo: f64, hi: f64, shape: (usize, usize)) -> Result<Tensor> {
        if !(lo < hi) {
            return Err(Error::invalid(format!(
                "uniform range requires lo < hi, got [{lo}, {hi})"
            )));
        }
        let n = shape.0 * shape.1;
        let mut data = Vec::with_capacity(n);
        for _ in 0..n {
            let v = lo + (hi - lo) * self.unit();
            // lo + (hi-lo)*u can round up to hi when the interval is tiny
            data.push(if v < hi { v } else { lo });
        }
        Tensor::from_vec(shape.0, shape.1, data)
    }
}

/// SplitMix64 finalizer applied over `seed` and each tag in order.
pub fn derive_seed(seed: u64, tags: &[u64]) -> u64 {
    fn mix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
    tags.iter().fold(mix(seed), |acc, &t| mix(acc ^ mix(t)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fresh_rng_with_same_seed_repeats() {
        let a = SimRng::new(42).sample_uniform(-1.0, 1.0, (2, 1)).unwrap();
        let b = SimRng::new(42).sample_uniform(-1.0, 1.0, (2, 1)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn tiny_interval_stays_in_range() {
        let hi = 1.0;
        let lo = hi - 1e-12;
        let t = SimRng::new(3).sample_uniform(lo, hi, (64, 1)).unwrap();
        assert!(t.as_slice().iter().all(|&v| v >= lo && v < hi));
    }

    #[test]
    fn different_seeds_differ_in_first_draws() {
        let mut a = SimRng::new(1);
        let mut b = SimRng::new(2);
        let da: Vec<u64> = (0..16).map(|_| a.next_u64()).collect();
        let db: Vec<u64> = (0..16).map(|_| b.next_u64()).collect();
        assert!(da.iter().zip(&db).all(|(x, y)| x != y));
    }

    #[test]
    fn rejects_empty_range() {
        assert!(SimRng::new(0).sample_uniform(1.0, 1.0, (1, 1)).is_err());
        assert!(SimRng::new(0).sample_uniform(2.0, 1.0, (1, 1)).is_err());
    }

    #[test]
    fn derived_streams_are_distinct_and_stable() {
        assert_eq!(derive_seed(7, &[1, 2]), derive_seed(7, &[1, 2]));
        assert_ne!(derive_seed(7, &[1, 2]), derive_seed(7, &[2, 1]));
        assert_ne!(derive_seed(7, &[1]), derive_seed(8, &[1]));
    }

    #[test]
    fn chacha_stream_is_pinned() {
        // guards against a silent algorithm change in the rng dependency
        assert_eq!(SimRng::new(42).next_u64(), 12578764544318200737);
    }
}
