//! Shared fixtures for the criterion benchmarks.

use qmean::RandVar;
use rand::Rng;

/// Uniform-weight variable with `d` values drawn from `[-1, 1]`.
pub fn random_instance<R: Rng>(d: usize, rng: &mut R) -> RandVar {
    let values: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
    RandVar::new(&vec![1.0 / d as f64; d], &values).expect("valid fixture")
}
