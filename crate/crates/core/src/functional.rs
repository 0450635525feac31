//! Functional operators composed from the basic ones: nearest neighbours,
//! neighbours within range, cosine similarity, shared neighbours and
//! per-feature density estimation.

use crate::batch::{plan_for, BatchPlan, OpKind};
use crate::error::{Error, Result};
use crate::exec::Executor;
use crate::fused::{fused_knn, fused_nwr, PairSource};
use crate::ops::ecdf::{ecdf_eval, EcdfTable};
use crate::ops::histogram::histogram;
use crate::ops::sets::intersect;
use crate::scalar::Scalar;
use crate::tensor::DenseMatrix;

/// Per-row sorted nearest neighbours. Row `i` lives at `[i*k, (i+1)*k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborList<T> {
    pub n: usize,
    pub k: usize,
    pub indices: Vec<usize>,
    pub distances_sq: Vec<T>,
}

impl<T: Scalar> NeighborList<T> {
    pub fn row(&self, i: usize) -> &[usize] {
        &self.indices[i * self.k..(i + 1) * self.k]
    }

    pub fn row_distances_sq(&self, i: usize) -> &[T] {
        &self.distances_sq[i * self.k..(i + 1) * self.k]
    }

    /// Euclidean (not squared) distance to the `k`-th neighbour of row `i`.
    pub fn kth_distance(&self, i: usize) -> T {
        self.distances_sq[(i + 1) * self.k - 1].sqrt()
    }
}

/// Symmetric adjacency under a squared-distance threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct RangeNeighbors {
    /// Threshold in squared-distance units, widened to `f64`.
    pub threshold: f64,
    pub adjacency: Vec<Vec<usize>>,
}

impl RangeNeighbors {
    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum()
    }
}

/// Exact k nearest neighbours of every row of `x` among the other rows.
pub fn knn<T: Scalar>(x: &DenseMatrix<T>, k: usize, plan: &BatchPlan, exec: &Executor) -> Result<NeighborList<T>> {
    fused_knn(PairSource::self_join(x), k, plan, exec)
}

/// [`knn`] with a plan derived from the executor's budget.
pub fn knn_auto<T: Scalar>(x: &DenseMatrix<T>, k: usize, exec: &Executor) -> Result<NeighborList<T>> {
    let plan = plan_for(exec, OpKind::Knn { k }, x.n(), x.n(), x.d(), T::PRECISION)?;
    knn(x, k, &plan, exec)
}

/// Neighbours within squared distance `phi` (inclusive), self excluded.
pub fn nwr<T: Scalar>(x: &DenseMatrix<T>, phi: T, plan: &BatchPlan, exec: &Executor) -> Result<RangeNeighbors> {
    fused_nwr(PairSource::self_join(x), phi, plan, exec)
}

pub fn nwr_auto<T: Scalar>(x: &DenseMatrix<T>, phi: T, exec: &Executor) -> Result<RangeNeighbors> {
    let plan = plan_for(exec, OpKind::Nwr, x.n(), x.n(), x.d(), T::PRECISION)?;
    nwr(x, phi, &plan, exec)
}

/// Pairwise cosine similarity of the offsets `P_j − center`, clamped to `[-1, 1]`.
pub fn cosine_sim<T: Scalar>(center: &[T], points: &DenseMatrix<T>) -> Result<DenseMatrix<T>> {
    if center.len() != points.d() {
        return Err(Error::DimensionMismatch(format!(
            "center has {} coordinates, points have {}",
            center.len(),
            points.d()
        )));
    }
    let m = points.n();
    let offsets: Vec<Vec<T>> = points
        .rows()
        .map(|r| r.iter().zip(center).map(|(&p, &c)| p - c).collect())
        .collect();
    let mut scratch = Vec::new();
    let norms: Vec<T> = offsets
        .iter()
        .map(|o| T::dot_pairwise(o, o, &mut scratch).sqrt())
        .collect();
    if let Some(j) = norms.iter().position(|&v| v == T::zero()) {
        return Err(Error::CoincidentPoint(j));
    }
    let mut out = vec![T::zero(); m * m];
    for j in 0..m {
        for l in j..m {
            let v = if j == l {
                T::one()
            } else {
                let dot = T::dot_pairwise(&offsets[j], &offsets[l], &mut scratch);
                (dot / (norms[j] * norms[l])).max(-T::one()).min(T::one())
            };
            out[j * m + l] = v;
            out[l * m + j] = v;
        }
    }
    DenseMatrix::from_vec(m, m, out)
}

/// Number of common neighbours of rows `i` and `j`.
pub fn shared_neighbors<T: Scalar>(nl: &NeighborList<T>, i: usize, j: usize) -> Result<usize> {
    if i >= nl.n || j >= nl.n {
        return Err(Error::InvalidParameter(format!("row index out of range for {} rows", nl.n)));
    }
    Ok(intersect(nl.row(i), nl.row(j)).len())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DensityMethod {
    /// Relative frequency of the sample's equal-width bin.
    Histogram { bins: usize },
    /// Empirical CDF value.
    Ecdf,
}

/// Per-sample, per-feature density estimate of `x` fitted on `x` itself.
pub fn density_est<T: Scalar>(x: &DenseMatrix<T>, method: DensityMethod) -> Result<DenseMatrix<T>> {
    match method {
        DensityMethod::Histogram { bins } => {
            let h = histogram(x, bins)?;
            let mut out = Vec::with_capacity(x.n() * x.d());
            for r in x.rows() {
                out.extend(r.iter().enumerate().map(|(j, &v)| T::from_f64_rne(h.frequency(j, v))));
            }
            DenseMatrix::from_vec(x.n(), x.d(), out)
        }
        DensityMethod::Ecdf => ecdf_eval(&EcdfTable::fit(x)?, x),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::batch::plan;
    use crate::ops::distance::cdist_sq;
    use crate::ops::topk::{topk, TopkMode};
    use crate::Precision;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn random(n: usize, d: usize, seed: u64) -> DenseMatrix<f64> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        DenseMatrix::from_vec(n, d, (0..n * d).map(|_| rng.random::<f64>()).collect()).unwrap()
    }

    fn naive_knn(x: &DenseMatrix<f64>, k: usize) -> Vec<Vec<usize>> {
        (0..x.n())
            .map(|i| {
                let mut d: Vec<(f64, usize)> = (0..x.n())
                    .filter(|&j| j != i)
                    .map(|j| (x.row(i).iter().zip(x.row(j)).map(|(a, b)| (a - b) * (a - b)).sum(), j))
                    .collect();
                d.sort_by(|a, b| a.partial_cmp(b).unwrap());
                d.into_iter().take(k).map(|p| p.1).collect()
            })
            .collect()
    }

    #[test]
    fn collinear_points() {
        let x = DenseMatrix::<f64>::from_rows(&[[0.0], [1.0], [3.0]]).unwrap();
        let nl = knn_auto(&x, 1, &Executor::sequential()).unwrap();
        assert_eq!(nl.indices, vec![1, 0, 1]);
        assert_eq!(nl.distances_sq, vec![1.0, 1.0, 4.0]);
        assert_eq!(nl.kth_distance(2), 2.0);
    }

    #[test]
    fn k_is_everyone_else() {
        let x = random(12, 3, 1);
        let nl = knn_auto(&x, 11, &Executor::sequential()).unwrap();
        for i in 0..12 {
            let mut r = nl.row(i).to_vec();
            r.sort();
            assert_eq!(r, (0..12).filter(|&j| j != i).collect::<Vec<_>>());
        }
        assert!(matches!(knn_auto(&x, 12, &Executor::sequential()), Err(Error::KOutOfRange { .. })));
        assert!(knn_auto(&x, 0, &Executor::sequential()).is_err());
    }

    #[test]
    fn batch_sizes_agree_with_naive_oracle() {
        let x = random(200, 5, 2);
        let want = naive_knn(&x, 6);
        for b in [7, 64, 200] {
            for w in [1, 3] {
                let ex = Executor::with_workers(w).unwrap();
                let p = plan(OpKind::Knn { k: 6 }, 200, 5, Precision::P64, u64::MAX, Some(b)).unwrap();
                let nl = knn(&x, 6, &p, &ex).unwrap();
                for (i, w) in want.iter().enumerate() {
                    assert_eq!(nl.row(i), &w[..], "b={b} row {i}");
                }
            }
        }
    }

    #[test]
    fn knn_equals_topk_of_cdist_minus_self() {
        let x = random(60, 4, 3);
        let d = cdist_sq(&x, &x).unwrap();
        let t = topk(&d.block, 6, TopkMode::Smallest).unwrap();
        let nl = knn_auto(&x, 5, &Executor::sequential()).unwrap();
        for i in 0..60 {
            let want: Vec<usize> = t.row_indices(i).iter().copied().filter(|&j| j != i).take(5).collect();
            assert_eq!(nl.row(i), &want[..]);
        }
    }

    #[test]
    fn nwr_boundaries() {
        let x = random(30, 3, 4);
        let ex = Executor::sequential();
        let r = nwr_auto(&x, 0.0, &ex).unwrap();
        assert_eq!(r.edge_count(), 0);
        let r = nwr_auto(&x, 100.0, &ex).unwrap();
        for (i, a) in r.adjacency.iter().enumerate() {
            assert_eq!(a, &(0..30).filter(|&j| j != i).collect::<Vec<_>>());
        }
        assert!(nwr_auto(&x, -1.0, &ex).is_err());
    }

    #[test]
    fn nwr_tie_counts_as_inside() {
        let x = DenseMatrix::<f64>::from_rows(&[[0.0, 0.0], [3.0, 4.0], [10.0, 0.0]]).unwrap();
        let r = nwr_auto(&x, 25.0, &Executor::sequential()).unwrap();
        assert_eq!(r.adjacency, vec![vec![1], vec![0], vec![]]);
    }

    #[test]
    fn nwr_matches_naive_threshold() {
        let x = random(300, 4, 5);
        let (x, _) = crate::tensor::min_max_scale(&x).unwrap();
        let d = cdist_sq(&x, &x).unwrap();
        for b in [17, 300] {
            let p = plan(OpKind::Nwr, 300, 4, Precision::P64, u64::MAX, Some(b)).unwrap();
            let r = nwr(&x, 0.05, &p, &Executor::sequential()).unwrap();
            for i in 0..300 {
                let want: Vec<usize> = (0..300).filter(|&j| j != i && d.at(i, j) <= 0.05).collect();
                assert_eq!(r.adjacency[i], want);
            }
        }
    }

    #[test]
    fn cosine_examples() {
        let p = DenseMatrix::<f64>::from_rows(&[[1.0, 0.0], [0.0, 1.0], [2.0, 0.0], [-3.0, 0.0]]).unwrap();
        let c = cosine_sim(&[0.0, 0.0], &p).unwrap();
        assert_eq!(c.get(0, 1), 0.0);
        assert_eq!(c.get(0, 2), 1.0);
        assert_eq!(c.get(0, 3), -1.0);
        assert!((0..4).all(|i| c.get(i, i) == 1.0));
        let bad = DenseMatrix::<f64>::from_rows(&[[1.0, 0.0], [0.0, 0.0]]).unwrap();
        assert_eq!(cosine_sim(&[0.0, 0.0], &bad), Err(Error::CoincidentPoint(1)));
    }

    #[test]
    fn shared_neighbor_counts() {
        let nl = NeighborList::<f64> {
            n: 3,
            k: 3,
            indices: vec![1, 2, 3, 2, 3, 4, 5, 6, 7],
            distances_sq: vec![0.0; 9],
        };
        assert_eq!(shared_neighbors(&nl, 0, 0).unwrap(), 3);
        assert_eq!(shared_neighbors(&nl, 0, 1).unwrap(), 2);
        assert_eq!(shared_neighbors(&nl, 0, 2).unwrap(), 0);
        assert!(shared_neighbors(&nl, 0, 3).is_err());
    }

    #[test]
    fn density_examples() {
        let x = DenseMatrix::<f64>::from_rows(&[[0.0], [1.0], [2.0], [3.0]]).unwrap();
        let h = density_est(&x, DensityMethod::Histogram { bins: 2 }).unwrap();
        assert_eq!(h.get(0, 0), 0.5);
        let e = density_est(&x, DensityMethod::Ecdf).unwrap();
        assert_eq!(e.get(3, 0), 1.0);
    }

    #[test]
    fn histogram_frequencies_sum_to_one_over_bins() {
        let x = random(500, 3, 6);
        let h = histogram(&x, 7).unwrap();
        let dens = density_est(&x, DensityMethod::Histogram { bins: 7 }).unwrap();
        for j in 0..3 {
            let mut seen = std::collections::BTreeMap::new();
            for i in 0..500 {
                seen.insert(h.features[j].locate(x.get(i, j)), dens.get(i, j));
            }
            let total: f64 = seen.values().sum();
            assert!((total - 1.0).abs() < 1e-12);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn nwr_is_symmetric(seed in 0u64..1000, phi in 0.0f64..0.5) {
            let x = random(80, 3, seed);
            let r = nwr_auto(&x, phi, &Executor::sequential()).unwrap();
            for (i, a) in r.adjacency.iter().enumerate() {
                for &j in a {
                    prop_assert!(r.adjacency[j].binary_search(&i).is_ok());
                }
            }
        }

        #[test]
        fn knn_is_batch_invariant(seed in 0u64..1000, b in 1usize..90, k in 1usize..8) {
            let x = random(90, 4, seed);
            let ex = Executor::sequential();
            let full = knn(&x, k, &plan(OpKind::Knn { k }, 90, 4, Precision::P64, u64::MAX, None).unwrap(), &ex).unwrap();
            let part = knn(&x, k, &plan(OpKind::Knn { k }, 90, 4, Precision::P64, u64::MAX, Some(b)).unwrap(), &ex).unwrap();
            prop_assert_eq!(full, part);
        }
    }
}
