//! Fused distance consumers: the distance matrix is produced one tile at a
//! time and consumed immediately (k-smallest selection or thresholding), so
//! the full `n × n` matrix never exists.

use std::ops::Range;

use crate::batch::{estimate_block_bytes, BatchPlan, OpKind};
use crate::error::{Error, Result};
use crate::exec::Executor;
use crate::functional::{NeighborList, RangeNeighbors};
use crate::ledger::MemoryLedger;
use crate::ops::distance::{fill_block, row_norms};
use crate::ops::topk::{asc, select_sorted, SmallestK};
use crate::scalar::Scalar;
use crate::tensor::DenseMatrix;

/// Query rows against reference rows. A self-join excludes `i == j`.
#[derive(Debug, Clone, Copy)]
pub struct PairSource<'a, T> {
    pub queries: &'a DenseMatrix<T>,
    pub reference: &'a DenseMatrix<T>,
    pub self_join: bool,
}

impl<'a, T: Scalar> PairSource<'a, T> {
    pub fn self_join(x: &'a DenseMatrix<T>) -> Self {
        Self {
            queries: x,
            reference: x,
            self_join: true,
        }
    }

    pub fn cross(queries: &'a DenseMatrix<T>, reference: &'a DenseMatrix<T>) -> Self {
        Self {
            queries,
            reference,
            self_join: false,
        }
    }

    pub fn check(&self) -> Result<()> {
        if self.queries.d() != self.reference.d() {
            return Err(Error::DimensionMismatch(format!(
                "queries have {} columns, reference has {}",
                self.queries.d(),
                self.reference.d()
            )));
        }
        Ok(())
    }

    /// Largest valid k.
    pub fn max_k(&self) -> usize {
        self.reference.n() - usize::from(self.self_join)
    }

    pub fn check_k(&self, k: usize) -> Result<()> {
        if k == 0 || k > self.max_k() {
            return Err(Error::KOutOfRange { k, max: self.max_k() });
        }
        Ok(())
    }

    /// Number of (query, reference) pairs considered, self pairs excluded.
    pub fn entries(&self) -> u64 {
        let all = self.queries.n() as u64 * self.reference.n() as u64;
        if self.self_join {
            all - self.queries.n() as u64
        } else {
            all
        }
    }
}

/// Exact k nearest reference rows of every query row.
///
/// Each row block keeps the `k` best candidates of every column block and
/// merges them with a final selection, which is exact because a global
/// neighbour is always among the local winners of its own block.
pub fn fused_knn<T: Scalar>(src: PairSource<'_, T>, k: usize, plan: &BatchPlan, exec: &Executor) -> Result<NeighborList<T>> {
    src.check()?;
    src.check_k(k)?;
    let cols = plan.col_blocks().to_vec();
    let rows_out = exec.run(plan.row_blocks(), |rows, ledger| knn_row_block(src, rows.clone(), &cols, k, ledger))?;
    let mut indices = Vec::with_capacity(src.queries.n() * k);
    let mut distances_sq = Vec::with_capacity(src.queries.n() * k);
    for (idx, dist) in rows_out {
        indices.extend(idx);
        distances_sq.extend(dist);
    }
    Ok(NeighborList {
        n: src.queries.n(),
        k,
        indices,
        distances_sq,
    })
}

fn knn_row_block<T: Scalar>(
    src: PairSource<'_, T>,
    rows: Range<usize>,
    col_blocks: &[Range<usize>],
    k: usize,
    ledger: &MemoryLedger,
) -> Result<(Vec<usize>, Vec<T>)> {
    let bpv = T::PRECISION.bytes_per_value();
    let idx_bytes = std::mem::size_of::<usize>();
    let _cand_grant = ledger.alloc_values(rows.len() * k * col_blocks.len(), bpv + idx_bytes)?;
    let _row_norm_grant = ledger.alloc_values(rows.len(), bpv)?;
    let q_norms = row_norms(src.queries, rows.clone());
    let mut candidates: Vec<Vec<(T, usize)>> = (0..rows.len()).map(|_| Vec::with_capacity(k * col_blocks.len())).collect();
    let mut block = Vec::new();
    for cols in col_blocks {
        let _g = ledger.alloc_values(rows.len() * cols.len() + cols.len(), bpv)?;
        let r_norms = row_norms(src.reference, cols.clone());
        block.clear();
        block.resize(rows.len() * cols.len(), T::zero());
        fill_block(src.queries, &q_norms, rows.clone(), src.reference, &r_norms, cols.clone(), &mut block);
        for ((ri, i), cand) in rows.clone().enumerate().zip(&mut candidates) {
            let mut best = SmallestK::new(k);
            let line = &block[ri * cols.len()..(ri + 1) * cols.len()];
            for (&v, j) in line.iter().zip(cols.clone()) {
                if src.self_join && j == i {
                    continue;
                }
                best.push(v, j);
            }
            cand.extend(best.into_sorted());
        }
    }
    let mut idx = Vec::with_capacity(rows.len() * k);
    let mut dist = Vec::with_capacity(rows.len() * k);
    for mut c in candidates {
        select_sorted(&mut c, k, asc);
        for (v, j) in c {
            idx.push(j);
            dist.push(v);
        }
    }
    Ok((idx, dist))
}

/// All reference rows within squared distance `phi` (inclusive) of each query.
pub fn fused_nwr<T: Scalar>(src: PairSource<'_, T>, phi: T, plan: &BatchPlan, exec: &Executor) -> Result<RangeNeighbors> {
    src.check()?;
    if !(phi >= T::zero()) {
        return Err(Error::InvalidParameter("range threshold must be non-negative".into()));
    }
    let cols = plan.col_blocks().to_vec();
    let parts = exec.run(plan.row_blocks(), |rows, ledger| nwr_row_block(src, rows.clone(), &cols, phi, ledger))?;
    Ok(RangeNeighbors {
        threshold: phi.widen(),
        adjacency: parts.into_iter().flatten().collect(),
    })
}

fn nwr_row_block<T: Scalar>(
    src: PairSource<'_, T>,
    rows: Range<usize>,
    col_blocks: &[Range<usize>],
    phi: T,
    ledger: &MemoryLedger,
) -> Result<Vec<Vec<usize>>> {
    let bpv = T::PRECISION.bytes_per_value();
    let _row_norm_grant = ledger.alloc_values(rows.len(), bpv)?;
    let q_norms = row_norms(src.queries, rows.clone());
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); rows.len()];
    let mut block = Vec::new();
    for cols in col_blocks {
        let _g = ledger.alloc_values(rows.len() * cols.len() + cols.len(), bpv)?;
        let r_norms = row_norms(src.reference, cols.clone());
        block.clear();
        block.resize(rows.len() * cols.len(), T::zero());
        fill_block(src.queries, &q_norms, rows.clone(), src.reference, &r_norms, cols.clone(), &mut block);
        for (ri, i) in rows.clone().enumerate() {
            let line = &block[ri * cols.len()..(ri + 1) * cols.len()];
            adj[ri].extend(
                line.iter()
                    .zip(cols.clone())
                    .filter(|&(&v, j)| v <= phi && !(src.self_join && j == i))
                    .map(|(_, j)| j),
            );
        }
    }
    Ok(adj)
}

/// Unfused composition used when no fusion rule applies: the whole distance
/// matrix is an intermediate and is charged to the ledger in one request.
pub fn materialized_knn<T: Scalar>(src: PairSource<'_, T>, k: usize, exec: &Executor) -> Result<NeighborList<T>> {
    src.check()?;
    src.check_k(k)?;
    let _g = exec
        .ledger(0)
        .alloc_values(src.queries.n() * src.reference.n(), T::PRECISION.bytes_per_value())?;
    let full = crate::ops::distance::cdist_sq(src.queries, src.reference)?;
    let mut indices = Vec::new();
    let mut distances_sq = Vec::new();
    for i in 0..src.queries.n() {
        let mut row: Vec<(T, usize)> = full
            .block
            .row(i)
            .iter()
            .copied()
            .zip(0..)
            .filter(|&(_, j)| !(src.self_join && j == i))
            .collect();
        select_sorted(&mut row, k, asc);
        for (v, j) in row {
            indices.push(j);
            distances_sq.push(v);
        }
    }
    Ok(NeighborList {
        n: src.queries.n(),
        k,
        indices,
        distances_sq,
    })
}

/// Unfused threshold: full matrix, then compare.
pub fn materialized_nwr<T: Scalar>(src: PairSource<'_, T>, phi: T, exec: &Executor) -> Result<RangeNeighbors> {
    src.check()?;
    let _g = exec
        .ledger(0)
        .alloc_values(src.queries.n() * src.reference.n(), T::PRECISION.bytes_per_value())?;
    let full = crate::ops::distance::cdist_sq(src.queries, src.reference)?;
    let adjacency = (0..src.queries.n())
        .map(|i| {
            full.block
                .row(i)
                .iter()
                .enumerate()
                .filter(|&(j, &v)| v <= phi && !(src.self_join && j == i))
                .map(|(j, _)| j)
                .collect()
        })
        .collect();
    Ok(RangeNeighbors {
        threshold: phi.widen(),
        adjacency,
    })
}

/// Upper bound on ledger usage of a fused knn run under `plan`.
pub fn fused_knn_peak_bound(plan: &BatchPlan, k: usize, rows: usize, cols: usize, d: usize, precision: crate::Precision) -> u64 {
    estimate_block_bytes(OpKind::Knn { k }, plan.batch_size, rows, cols, d, precision)
}
