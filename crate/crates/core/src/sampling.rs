//! Seed derivation and uniform sample streams.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::kaczmarz::Sample;

/// Mixes a base seed with a stream number (SplitMix64 finalizer), so that
/// every consumer of randomness gets an independent ChaCha stream.
pub fn derive_seed(base: u64, stream: u64) -> u64 {
    let mut z = base ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Endless stream of independent uniform points of `[0, 1)^d`.
pub struct UniformPoints {
    rng: ChaCha8Rng,
    d: usize,
}

impl UniformPoints {
    pub fn new(d: usize, seed: u64) -> Self {
        UniformPoints {
            rng: ChaCha8Rng::seed_from_u64(seed),
            d,
        }
    }
}

impl Iterator for UniformPoints {
    type Item = Vec<f64>;

    fn next(&mut self) -> Option<Vec<f64>> {
        Some((0..self.d).map(|_| self.rng.random::<f64>()).collect())
    }
}

/// Endless stream of samples `(X_i, f(X_i))` at uniform points.
pub fn uniform_samples<F>(f: F, d: usize, seed: u64) -> impl Iterator<Item = Sample>
where
    F: Fn(&[f64]) -> f64,
{
    UniformPoints::new(d, seed).map(move |x| {
        let value = f(&x);
        Sample::from_raw(x, value)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn streams_are_reproducible_and_in_range() {
        let a: Vec<_> = UniformPoints::new(3, 9).take(500).collect();
        let b: Vec<_> = UniformPoints::new(3, 9).take(500).collect();
        assert_eq!(a, b);
        assert!(a.iter().flatten().all(|&t| (0.0..1.0).contains(&t)));
        assert_ne!(a[0], UniformPoints::new(3, 10).next().unwrap());
    }

    #[test]
    fn derived_seeds_differ() {
        let seeds: std::collections::HashSet<u64> = (0..1000)
            .flat_map(|b| (0..8).map(move |s| derive_seed(b, s)))
            .collect();
        assert_eq!(seeds.len(), 8000);
    }
}
