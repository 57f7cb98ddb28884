//! Shared fixtures for the benchmark targets.

use rand::Rng;

use lstat::{RngStream, SampleMatrix};

/// Seeded iid standard normal matrix.
pub fn normal_matrix(n: usize, p: usize, seed: u64) -> SampleMatrix {
    let mut rng = RngStream::new(seed).rng();
    let data: Vec<f64> = (0..n * p)
        .map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal))
        .collect();
    SampleMatrix::from_flat(data, n, p).expect("valid fixture")
}

/// Seeded vector of t-statistic-like values.
pub fn normal_vector(len: usize, seed: u64) -> Vec<f64> {
    let mut rng = RngStream::new(seed).rng();
    (0..len)
        .map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal))
        .collect()
}
