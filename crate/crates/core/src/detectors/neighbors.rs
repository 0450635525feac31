//! Proximity detectors: kNN distance, LOF, ABOD.

use crate::batch::{plan_for, OpKind};
use crate::error::Result;
use crate::exec::Executor;
use crate::functional::{cosine_sim, NeighborList};
use crate::fused::{fused_knn, PairSource};
use crate::quantize::{topk_provable_dyn, QuantReport};
use crate::scalar::{Precision, Scalar};
use crate::tensor::DenseMatrix;

use super::{Algorithm, Scored};

#[derive(Debug, Clone)]
struct LofStats<T> {
    k_dist: Vec<T>,
    lrd: Vec<T>,
}

#[derive(Debug, Clone)]
pub struct NeighborModel<T> {
    algo: Algorithm,
    k: usize,
    quantize: Option<Precision>,
    train: DenseMatrix<T>,
    lof: Option<LofStats<T>>,
}

/// k nearest neighbours through the fused path or its quantized twin.
fn neighbors<T: Scalar>(
    src: PairSource<'_, T>,
    k: usize,
    quantize: Option<Precision>,
    exec: &Executor,
) -> Result<(NeighborList<T>, Option<QuantReport>)> {
    let (rows, cols, d) = (src.queries.n(), src.reference.n(), src.queries.d());
    match quantize {
        None => {
            let plan = plan_for(exec, OpKind::Knn { k }, rows, cols, d, T::PRECISION)?;
            Ok((fused_knn(src, k, &plan, exec)?, None))
        }
        Some(low) => {
            let plan = plan_for(exec, OpKind::ProvableKnn { k, low }, rows, cols, d, T::PRECISION)?;
            let x_max = src.queries.max_abs().max(src.reference.max_abs());
            let (nl, rep) = topk_provable_dyn(src, k, low, x_max, &plan, exec)?;
            Ok((nl, Some(rep)))
        }
    }
}

fn mean<T: Scalar>(v: impl Iterator<Item = T>, count: usize) -> T {
    v.fold(T::zero(), |a, b| a + b) / T::from_usize_lossy(count)
}

impl<T: Scalar> NeighborModel<T> {
    pub(super) fn fit(
        algo: Algorithm,
        x: &DenseMatrix<T>,
        k: usize,
        quantize: Option<Precision>,
        exec: &Executor,
    ) -> Result<(Self, Scored)> {
        let (nl, quant) = neighbors(PairSource::self_join(x), k, quantize, exec)?;
        let mut model = Self {
            algo,
            k,
            quantize,
            train: x.clone(),
            lof: None,
        };
        let scores = match algo {
            Algorithm::Lof => {
                let k_dist: Vec<T> = (0..x.n()).map(|i| nl.kth_distance(i)).collect();
                let lrd = local_reach_density(&nl, &k_dist);
                let scores = (0..x.n()).map(|i| lof_score(nl.row(i), lrd[i], &lrd)).collect();
                model.lof = Some(LofStats { k_dist, lrd });
                scores
            }
            _ => model.scores_from(x, &nl)?,
        };
        Ok((model, Scored { scores, quant }))
    }

    pub(super) fn score(&self, x: &DenseMatrix<T>, exec: &Executor) -> Result<Scored> {
        let (nl, quant) = neighbors(PairSource::cross(x, &self.train), self.k, self.quantize, exec)?;
        let scores = match &self.lof {
            Some(stats) => {
                let lrd_q = local_reach_density(&nl, &stats.k_dist);
                (0..x.n()).map(|i| lof_score(nl.row(i), lrd_q[i], &stats.lrd)).collect()
            }
            None => self.scores_from(x, &nl)?,
        };
        Ok(Scored { scores, quant })
    }

    fn scores_from(&self, queries: &DenseMatrix<T>, nl: &NeighborList<T>) -> Result<Vec<f64>> {
        match self.algo {
            Algorithm::Knn => Ok((0..nl.n).map(|i| nl.kth_distance(i).widen()).collect()),
            Algorithm::Abod => (0..nl.n).map(|i| self.abod_score(queries.row(i), nl.row(i))).collect(),
            _ => unreachable!("not a neighbour detector"),
        }
    }

    /// Negated population variance of pairwise cosines of neighbour offsets.
    fn abod_score(&self, center: &[T], nbrs: &[usize]) -> Result<f64> {
        let usable: Vec<usize> = nbrs
            .iter()
            .copied()
            .filter(|&j| self.train.row(j) != center)
            .collect();
        if usable.len() < 2 {
            return Ok(0.0);
        }
        let points = self.train.select_rows(&usable);
        let cos = cosine_sim(center, &points)?;
        let m = usable.len();
        let pairs = m * (m - 1) / 2;
        let vals = (0..m).flat_map(|a| (a + 1..m).map(move |b| (a, b)));
        let mu = mean(vals.clone().map(|(a, b)| cos.get(a, b)), pairs);
        let var = mean(
            vals.map(|(a, b)| {
                let e = cos.get(a, b) - mu;
                e * e
            }),
            pairs,
        );
        Ok((T::zero() - var).widen())
    }

    pub(super) fn dims(&self) -> usize {
        self.train.d()
    }
}

/// `1 / mean_j max(k_dist_j, dist(i, j))`; `+∞` when every reach distance is 0.
fn local_reach_density<T: Scalar>(nl: &NeighborList<T>, k_dist: &[T]) -> Vec<T> {
    (0..nl.n)
        .map(|i| {
            let reach = mean(
                nl.row(i)
                    .iter()
                    .zip(nl.row_distances_sq(i))
                    .map(|(&j, &d)| k_dist[j].max(d.sqrt())),
                nl.k,
            );
            if reach == T::zero() {
                T::infinity()
            } else {
                T::one() / reach
            }
        })
        .collect()
}

/// Mean neighbour density over own density. A point whose own density is
/// infinite (its neighbourhood is all duplicates) scores 1.
fn lof_score<T: Scalar>(nbrs: &[usize], lrd_i: T, lrd: &[T]) -> f64 {
    if lrd_i.is_infinite() {
        return 1.0;
    }
    (mean(nbrs.iter().map(|&j| lrd[j]), nbrs.len()) / lrd_i).widen()
}
