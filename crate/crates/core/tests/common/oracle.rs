//! Straightforward reference implementations in f64, written from the
//! textbook definitions without any of the library's operators.

use nalgebra::{DMatrix, DVector};
use tensorod::Algorithm;

pub fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Indices of the `k` nearest other rows, by (distance, index).
pub fn knn(x: &[Vec<f64>], i: usize, k: usize) -> Vec<(f64, usize)> {
    let mut all: Vec<(f64, usize)> = (0..x.len())
        .filter(|&j| j != i)
        .map(|j| (euclid(&x[i], &x[j]), j))
        .collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    all.truncate(k);
    all
}

pub fn knn_scores(x: &[Vec<f64>], k: usize) -> Vec<f64> {
    (0..x.len()).map(|i| knn(x, i, k)[k - 1].0).collect()
}

pub fn lof_scores(x: &[Vec<f64>], k: usize) -> Vec<f64> {
    let nbrs: Vec<Vec<(f64, usize)>> = (0..x.len()).map(|i| knn(x, i, k)).collect();
    let k_dist: Vec<f64> = nbrs.iter().map(|v| v[k - 1].0).collect();
    let lrd: Vec<f64> = nbrs
        .iter()
        .map(|v| {
            let reach: f64 = v.iter().map(|&(d, j)| d.max(k_dist[j])).sum::<f64>() / k as f64;
            1.0 / reach
        })
        .collect();
    nbrs.iter()
        .enumerate()
        .map(|(i, v)| v.iter().map(|&(_, j)| lrd[j]).sum::<f64>() / k as f64 / lrd[i])
        .collect()
}

pub fn abod_scores(x: &[Vec<f64>], k: usize) -> Vec<f64> {
    (0..x.len())
        .map(|i| {
            let offs: Vec<Vec<f64>> = knn(x, i, k)
                .into_iter()
                .map(|(_, j)| x[j].iter().zip(&x[i]).map(|(a, b)| a - b).collect())
                .collect();
            let mut cos = Vec::new();
            for a in 0..offs.len() {
                for b in a + 1..offs.len() {
                    let dot: f64 = offs[a].iter().zip(&offs[b]).map(|(p, q)| p * q).sum();
                    let na = offs[a].iter().map(|p| p * p).sum::<f64>().sqrt();
                    let nb = offs[b].iter().map(|p| p * p).sum::<f64>().sqrt();
                    cos.push(dot / (na * nb));
                }
            }
            let m = cos.len() as f64;
            let mu = cos.iter().sum::<f64>() / m;
            -cos.iter().map(|c| (c - mu) * (c - mu)).sum::<f64>() / m
        })
        .collect()
}

pub fn hbos_scores(x: &[Vec<f64>], bins: usize) -> Vec<f64> {
    let n = x.len();
    let d = x[0].len();
    let mut scores = vec![0.0; n];
    for j in 0..d {
        let col: Vec<f64> = x.iter().map(|r| r[j]).collect();
        let lo = col.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = col.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let bin = |v: f64| -> usize {
            if hi <= lo {
                return 0;
            }
            let t = (v - lo) / (hi - lo) * bins as f64;
            if t <= 0.0 {
                0
            } else {
                (t.floor() as usize).min(bins - 1)
            }
        };
        let mut counts = vec![0usize; bins];
        for &v in &col {
            counts[bin(v)] += 1;
        }
        for (s, &v) in scores.iter_mut().zip(&col) {
            *s -= (counts[bin(v)] as f64 / n as f64 + 1e-6).ln();
        }
    }
    scores
}

/// Two-sided empirical tail probabilities, floored at `1/(n+1)`.
pub fn ecod_scores(x: &[Vec<f64>]) -> Vec<f64> {
    let n = x.len();
    let floor = 1.0 / (n + 1) as f64;
    x.iter()
        .map(|row| {
            row.iter()
                .enumerate()
                .map(|(j, &v)| {
                    let left = x.iter().filter(|r| r[j] <= v).count() as f64 / n as f64;
                    let right = x.iter().filter(|r| r[j] >= v).count() as f64 / n as f64;
                    (-left.max(floor).ln()).max(-right.max(floor).ln())
                })
                .sum()
        })
        .collect()
}

/// Mahalanobis form `zᵀ C⁻¹ z` of the standardized rows, `C` their sample
/// covariance (every component kept).
pub fn pca_scores(x: &[Vec<f64>]) -> Vec<f64> {
    let n = x.len();
    let d = x[0].len();
    let m = DMatrix::from_fn(n, d, |i, j| x[i][j]);
    let mean = m.row_mean();
    let mut z = m.clone();
    for j in 0..d {
        let c = m.column(j);
        let mu = mean[j];
        let var = c.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / (n - 1) as f64;
        let sd = if var == 0.0 { 1.0 } else { var.sqrt() };
        for i in 0..n {
            z[(i, j)] = (m[(i, j)] - mu) / sd;
        }
    }
    let cov = z.transpose() * &z / (n - 1) as f64;
    let inv = cov.try_inverse().expect("full-rank covariance");
    (0..n)
        .map(|i| {
            let r = DVector::from_iterator(d, z.row(i).iter().cloned());
            (r.transpose() * &inv * &r)[(0, 0)]
        })
        .collect()
}

pub fn scores(algo: Algorithm, x: &[Vec<f64>], k: usize, bins: usize) -> Vec<f64> {
    match algo {
        Algorithm::Knn => knn_scores(x, k),
        Algorithm::Lof => lof_scores(x, k),
        Algorithm::Abod => abod_scores(x, k),
        Algorithm::Hbos => hbos_scores(x, bins),
        Algorithm::Pca => pca_scores(x),
        Algorithm::Ecod | Algorithm::Copod => ecod_scores(x),
    }
}
