use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Deterministic random source.
///
/// Backed by ChaCha8 keyed from a 64-bit seed; Gaussian draws use the ziggurat
/// sampler from `rand_distr`. Independent child generators are obtained with
/// [`SeededRng::derive`], which selects a separate ChaCha stream for the same
/// key so children never depend on how much the parent has been consumed.
#[derive(Debug, Clone)]
pub struct SeededRng {
    seed: u64,
    stream: u64,
    inner: ChaCha8Rng,
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        Self::derive(seed, 0)
    }

    pub fn derive(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        Self {
            seed,
            stream,
            inner,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    /// Uniform draw from `[lo, hi)`.
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.inner.random::<f64>()
    }

    /// Uniform index in `0..n`. `n` must be positive.
    pub fn index(&mut self, n: usize) -> usize {
        self.inner.random_range(0..n)
    }

    pub fn standard_normal(&mut self) -> f64 {
        self.inner.sample(StandardNormal)
    }

    /// `dim` independent draws from N(0, sigma²).
    pub fn gaussian_vec(&mut self, dim: usize, sigma: f64) -> Result<Vec<f64>> {
        if dim == 0 {
            return Err(Error::InvalidArgument("gaussian_vec needs dim >= 1".into()));
        }
        if sigma < 0.0 || !sigma.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "gaussian_vec needs a finite sigma >= 0, got {sigma}"
            )));
        }
        if sigma == 0.0 {
            return Ok(vec![0.0; dim]);
        }
        Ok((0..dim).map(|_| sigma * self.standard_normal()).collect())
    }

    /// Sample `amount` distinct indices from `0..len` (order is random).
    pub fn sample_indices(&mut self, len: usize, amount: usize) -> Vec<usize> {
        rand::seq::index::sample(&mut self.inner, len, amount).into_vec()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_sigma_gives_zero_vector() {
        let mut rng = SeededRng::new(3);
        assert_eq!(rng.gaussian_vec(4, 0.0).unwrap(), vec![0.0; 4]);
    }

    #[test]
    fn negative_sigma_rejected() {
        let mut rng = SeededRng::new(3);
        assert!(matches!(
            rng.gaussian_vec(2, -0.1),
            Err(Error::InvalidArgument(_))
        ));
        assert!(rng.gaussian_vec(0, 1.0).is_err());
    }

    #[test]
    fn same_seed_same_sequence() {
        let mut a = SeededRng::new(42);
        let mut b = SeededRng::new(42);
        let xa: Vec<f64> = (0..100).map(|_| a.standard_normal()).collect();
        let xb: Vec<f64> = (0..100).map(|_| b.standard_normal()).collect();
        assert_eq!(
            xa.iter().map(|x| x.to_bits()).collect::<Vec<_>>(),
            xb.iter().map(|x| x.to_bits()).collect::<Vec<_>>()
        );
    }

    #[test]
    fn derived_streams_differ_and_ignore_parent_consumption() {
        let mut a = SeededRng::derive(7, 1);
        let mut b = SeededRng::derive(7, 2);
        assert_ne!(a.uniform(0.0, 1.0), b.uniform(0.0, 1.0));

        let mut parent = SeededRng::new(7);
        for _ in 0..50 {
            parent.standard_normal();
        }
        let mut c1 = SeededRng::derive(parent.seed(), 5);
        let mut c2 = SeededRng::derive(7, 5);
        assert_eq!(c1.uniform(0.0, 1.0), c2.uniform(0.0, 1.0));
    }

    #[test]
    fn gaussian_moments_match() {
        let mut rng = SeededRng::new(2024);
        let n = 1_000_000;
        let xs = rng.gaussian_vec(n, 1.0).unwrap();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!(mean.abs() < 0.01, "mean {mean}");
        assert!((var.sqrt() - 1.0).abs() < 0.01, "std {}", var.sqrt());
    }

    #[test]
    fn sample_indices_are_distinct() {
        let mut rng = SeededRng::new(1);
        let mut idx = rng.sample_indices(100, 64);
        idx.sort_unstable();
        idx.dedup();
        assert_eq!(idx.len(), 64);
        assert!(idx.iter().all(|&i| i < 100));
    }
}
