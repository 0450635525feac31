#![allow(dead_code)]

pub mod oracle;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use tensorod::DenseMatrix;

/// Gaussian rows with a handful of shifted points.
pub fn random_rows(n: usize, d: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let shift = if i % 25 == 0 { 4.0 } else { 0.0 };
            (0..d).map(|_| rng.sample::<f64, _>(StandardNormal) + shift).collect()
        })
        .collect()
}

pub fn matrix(rows: &[Vec<f64>]) -> DenseMatrix<f64> {
    DenseMatrix::from_rows(rows).unwrap()
}

/// `|a − b| ≤ tol · max(|a|, |b|)`, with equal infinities accepted.
pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    a == b || (a - b).abs() <= tol * a.abs().max(b.abs())
}
