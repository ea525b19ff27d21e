//! Shared fixtures for the kernel benchmarks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use drdyn_core::{ProblemConfig, Vector};

pub fn config(d: usize, lambda: f64) -> ProblemConfig {
    ProblemConfig::new(d, lambda).expect("valid benchmark config")
}

/// Deterministic batch of points in `H+` with first coordinate in
/// [0.05, 2] and moderate norms.
pub fn h_plus_points(d: usize, count: usize, seed: u64) -> Vec<Vector> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let mut coords: Vec<f64> = (0..d).map(|_| rng.random_range(-2.0..2.0)).collect();
            coords[0] = rng.random_range(0.05..2.0);
            Vector::new(coords).expect("finite coordinates")
        })
        .collect()
}
