//! Automatic batching: split an operator invocation into blocks that fit the
//! workspace budget, run the blocks through an [`Executor`], merge.
//!
//! Sample-independent operators (top-k) are cut along rows, feature-independent
//! ones (histogram, ECDF) along columns, and distance-based operators over a
//! square grid of row/column splits.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Executor;
use crate::ops::distance::{cdist_sq_block, DistanceBlock};
use crate::ops::ecdf::EcdfTable;
use crate::ops::histogram::{histogram_features, HistogramSet};
use crate::ops::topk::{topk_rows, TopKResult, TopkMode};
use crate::scalar::{Precision, Scalar};
use crate::tensor::DenseMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BatchAxis {
    Samples,
    Features,
    Pairwise,
}

/// What is being batched; determines the axis and the per-block byte estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OpKind {
    Cdist,
    /// Fused distance + k-smallest.
    Knn { k: usize },
    /// Fused distance + threshold.
    Nwr,
    /// Knn evaluated at `low` and verified against the plan precision.
    ProvableKnn { k: usize, low: Precision },
    /// Nwr evaluated at `low` and verified against the plan precision.
    ProvableNwr { low: Precision },
    /// Row-wise top-k of an existing matrix.
    Topk { k: usize },
    Histogram { bins: usize },
    Ecdf,
}

impl OpKind {
    pub fn axis(self) -> BatchAxis {
        match self {
            OpKind::Cdist | OpKind::Knn { .. } | OpKind::Nwr | OpKind::ProvableKnn { .. } | OpKind::ProvableNwr { .. } => {
                BatchAxis::Pairwise
            }
            OpKind::Topk { .. } => BatchAxis::Samples,
            OpKind::Histogram { .. } | OpKind::Ecdf => BatchAxis::Features,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Blocks {
    /// Disjoint ranges along one axis.
    Ranges(Vec<Range<usize>>),
    /// Every (row split, column split) pair.
    Grid {
        rows: Vec<Range<usize>>,
        cols: Vec<Range<usize>>,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BatchPlan {
    pub axis: BatchAxis,
    pub batch_size: usize,
    pub blocks: Blocks,
    pub est_block_bytes: u64,
}

impl BatchPlan {
    /// Row splits (pairwise) or the single-axis ranges.
    pub fn row_blocks(&self) -> &[Range<usize>] {
        match &self.blocks {
            Blocks::Ranges(r) => r,
            Blocks::Grid { rows, .. } => rows,
        }
    }

    pub fn col_blocks(&self) -> &[Range<usize>] {
        match &self.blocks {
            Blocks::Ranges(r) => r,
            Blocks::Grid { cols, .. } => cols,
        }
    }

    /// All grid cells in row-major order (or the plain ranges paired with themselves
    /// for single-axis plans).
    pub fn block_pairs(&self) -> Vec<(Range<usize>, Range<usize>)> {
        match &self.blocks {
            Blocks::Ranges(r) => r.iter().map(|x| (x.clone(), x.clone())).collect(),
            Blocks::Grid { rows, cols } => rows
                .iter()
                .flat_map(|r| cols.iter().map(move |c| (r.clone(), c.clone())))
                .collect(),
        }
    }

    pub fn num_blocks(&self) -> usize {
        match &self.blocks {
            Blocks::Ranges(r) => r.len(),
            Blocks::Grid { rows, cols } => rows.len() * cols.len(),
        }
    }
}

/// Consecutive ranges of `size` covering `0..len`; the last may be shorter.
pub fn split(len: usize, size: usize) -> Vec<Range<usize>> {
    let size = size.max(1);
    (0..len.div_ceil(size))
        .map(|i| i * size..((i + 1) * size).min(len))
        .collect()
}

/// Bytes one block of size `b` needs for `op`.
///
/// `rows`/`cols` are the lengths of the two pairwise axes (equal for a
/// self-join); for single-axis ops `rows` is the number of samples and `d`
/// the number of features.
pub fn estimate_block_bytes(op: OpKind, b: usize, rows: usize, cols: usize, d: usize, precision: Precision) -> u64 {
    let bpv = precision.bytes_per_value() as u64;
    let idx = std::mem::size_of::<usize>() as u64;
    let (b, d) = (b as u64, d as u64);
    let br = b.min(rows as u64);
    let col_splits = (cols as u64).div_ceil(b.max(1));
    let bc = b.min(cols as u64);
    match op {
        OpKind::Cdist | OpKind::Nwr => br * bc * bpv + (br + bc) * bpv,
        OpKind::Knn { k } => br * bc * bpv + (br + bc) * bpv + br * k as u64 * col_splits * (bpv + idx),
        OpKind::ProvableNwr { low } => {
            let lb = low.bytes_per_value() as u64;
            br * bc * lb + (br + bc) * d * lb + (br + bc) * (lb + bpv)
        }
        OpKind::ProvableKnn { k, low } => {
            let lb = low.bytes_per_value() as u64;
            br * bc * lb + (br + bc) * d * lb + (br + bc) * (lb + bpv) + br * (k as u64 + 1) * (lb + idx) + br * k as u64 * (bpv + idx)
        }
        OpKind::Topk { k } => br * k as u64 * (bpv + idx),
        OpKind::Histogram { bins } => {
            let bf = b.min(d);
            bf * (bins as u64 * 8 + (bins as u64 + 1) * bpv)
        }
        OpKind::Ecdf => b.min(d) * rows as u64 * bpv,
    }
}

/// Square-grid or single-axis plan for an operator over one `n × d` input.
pub fn plan(
    op: OpKind,
    n: usize,
    d: usize,
    precision: Precision,
    budget_bytes: u64,
    requested_b: Option<usize>,
) -> Result<BatchPlan> {
    plan_cross(op, n, n, d, precision, budget_bytes, requested_b)
}

/// Plan for a pairwise operator between `rows` query samples and `cols`
/// reference samples (single-axis ops ignore `cols`).
pub fn plan_cross(
    op: OpKind,
    rows: usize,
    cols: usize,
    d: usize,
    precision: Precision,
    budget_bytes: u64,
    requested_b: Option<usize>,
) -> Result<BatchPlan> {
    let axis = op.axis();
    let axis_len = match axis {
        BatchAxis::Pairwise => rows.max(cols),
        BatchAxis::Samples => rows,
        BatchAxis::Features => d,
    };
    if requested_b == Some(0) {
        return Err(Error::InvalidParameter("batch size must be positive".into()));
    }
    let cap = requested_b.unwrap_or(usize::MAX).min(axis_len.max(1));
    let est = |b: usize| estimate_block_bytes(op, b, rows, cols, d, precision);
    let needed = est(1);
    if needed > budget_bytes {
        return Err(Error::BudgetInfeasible {
            needed,
            budget: budget_bytes,
        });
    }
    // The estimate is not monotone in b (column-split count rounds), so scan.
    let b = (1..=cap).rev().find(|&b| est(b) <= budget_bytes).unwrap_or(1);
    let blocks = match axis {
        BatchAxis::Pairwise => Blocks::Grid {
            rows: split(rows, b),
            cols: split(cols, b),
        },
        BatchAxis::Samples => Blocks::Ranges(split(rows, b)),
        BatchAxis::Features => Blocks::Ranges(split(d, b)),
    };
    Ok(BatchPlan {
        axis,
        batch_size: b,
        blocks,
        est_block_bytes: est(b),
    })
}

/// Plan using the executor's budget and batch-size cap.
pub fn plan_for(exec: &Executor, op: OpKind, rows: usize, cols: usize, d: usize, precision: Precision) -> Result<BatchPlan> {
    plan_cross(op, rows, cols, d, precision, exec.block_budget(), exec.config().batch_size)
}

/// Generic driver: evaluate every block on the executor, then merge in block order.
pub fn run_batched<B, R, O>(
    exec: &Executor,
    blocks: &[B],
    eval: impl Fn(&B, &crate::ledger::MemoryLedger) -> Result<R> + Sync,
    merge: impl FnOnce(Vec<R>) -> Result<O>,
) -> Result<O>
where
    B: Clone + Send + Sync,
    R: Send + Sync,
{
    merge(exec.run(blocks, eval)?)
}

/// Full distance matrix assembled from grid tiles (each tile charged while built).
pub fn batched_cdist<T: Scalar>(
    a: &DenseMatrix<T>,
    b: &DenseMatrix<T>,
    plan: &BatchPlan,
    exec: &Executor,
) -> Result<DistanceBlock<T>> {
    let pairs = plan.block_pairs();
    run_batched(
        exec,
        &pairs,
        |(r, c), ledger| {
            let _g = ledger.alloc(estimate_block_bytes(OpKind::Cdist, plan.batch_size, r.len(), c.len(), a.d(), T::PRECISION))?;
            cdist_sq_block(a, r.clone(), b, c.clone())
        },
        |tiles| {
            let width = b.n();
            let mut out = vec![T::zero(); a.n() * width];
            for t in tiles {
                let w = t.block.d();
                for i in 0..t.block.n() {
                    let dst = (t.row_offset + i) * width + t.col_offset;
                    out[dst..dst + w].copy_from_slice(t.block.row(i));
                }
            }
            Ok(DistanceBlock {
                row_offset: 0,
                col_offset: 0,
                block: DenseMatrix::from_vec(a.n(), width, out)?,
            })
        },
    )
}

/// Row-batched top-k; the merge is concatenation.
pub fn batched_topk<T: Scalar>(
    m: &DenseMatrix<T>,
    k: usize,
    mode: TopkMode,
    plan: &BatchPlan,
    exec: &Executor,
) -> Result<TopKResult<T>> {
    run_batched(
        exec,
        plan.row_blocks(),
        |r, ledger| {
            let _g = ledger.alloc(estimate_block_bytes(OpKind::Topk { k }, r.len(), r.len(), 0, m.d(), T::PRECISION))?;
            topk_rows(m, r.clone(), k, mode)
        },
        |parts| Ok(TopKResult::concat(parts, k)),
    )
}

/// Feature-batched histograms; the merge is the union of features.
pub fn batched_histogram<T: Scalar>(
    x: &DenseMatrix<T>,
    bins: usize,
    plan: &BatchPlan,
    exec: &Executor,
) -> Result<HistogramSet<T>> {
    run_batched(
        exec,
        plan.col_blocks(),
        |c, ledger| {
            let _g = ledger.alloc(estimate_block_bytes(OpKind::Histogram { bins }, c.len(), x.n(), 0, c.len(), T::PRECISION))?;
            histogram_features(x, c.clone(), bins)
        },
        |parts| Ok(HistogramSet::union(parts)),
    )
}

/// Feature-batched ECDF table construction.
pub fn batched_ecdf<T: Scalar>(x: &DenseMatrix<T>, plan: &BatchPlan, exec: &Executor) -> Result<EcdfTable<T>> {
    run_batched(
        exec,
        plan.col_blocks(),
        |c, ledger| {
            let _g = ledger.alloc(estimate_block_bytes(OpKind::Ecdf, c.len(), x.n(), 0, c.len(), T::PRECISION))?;
            EcdfTable::fit_features(x, c.clone())
        },
        |parts| Ok(EcdfTable::union(parts)),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ops::{cdist_sq, histogram, topk};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn random(n: usize, d: usize, seed: u64) -> DenseMatrix<f64> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        DenseMatrix::from_vec(n, d, (0..n * d).map(|_| rng.random::<f64>()).collect()).unwrap()
    }

    #[test]
    fn grid_of_forty() {
        let p = plan(OpKind::Cdist, 100, 4, Precision::P64, u64::MAX, Some(40)).unwrap();
        assert_eq!(p.axis, BatchAxis::Pairwise);
        assert_eq!(p.row_blocks(), &[0..40, 40..80, 80..100]);
        assert_eq!(p.num_blocks(), 9);
        assert_eq!(p.block_pairs()[5], (40..80, 80..100));
    }

    #[test]
    fn generous_budget_gives_single_block() {
        let p = plan(OpKind::Knn { k: 5 }, 300, 4, Precision::P64, u64::MAX, None).unwrap();
        assert_eq!(p.num_blocks(), 1);
        assert_eq!(p.batch_size, 300);
    }

    #[test]
    fn large_knn_plan_fits_64mb() {
        let budget = 64u64 << 20;
        let p = plan(OpKind::Knn { k: 10 }, 100_000, 32, Precision::P64, budget, None).unwrap();
        let bound = ((budget / 8) as f64).sqrt().floor() as usize;
        assert!(p.batch_size <= bound);
        assert!(p.est_block_bytes <= budget);
        // Largest feasible: one more row no longer fits.
        assert!(estimate_block_bytes(OpKind::Knn { k: 10 }, p.batch_size + 1, 100_000, 100_000, 32, Precision::P64) > budget);
    }

    #[test]
    fn infeasible_budget() {
        let e = plan(OpKind::Cdist, 10, 3, Precision::P64, 8, None).unwrap_err();
        assert!(matches!(e, Error::BudgetInfeasible { needed: 24, budget: 8 }));
    }

    #[test]
    fn axes_follow_operator() {
        assert_eq!(plan(OpKind::Topk { k: 2 }, 50, 9, Precision::P32, 1 << 20, Some(7)).unwrap().row_blocks().len(), 8);
        let h = plan(OpKind::Histogram { bins: 10 }, 50, 9, Precision::P32, 1 << 20, Some(4)).unwrap();
        assert_eq!(h.axis, BatchAxis::Features);
        assert_eq!(h.col_blocks(), &[0..4, 4..8, 8..9]);
    }

    #[test]
    fn batched_ops_match_single_shot() {
        let x = random(100, 6, 1);
        let full = cdist_sq(&x, &x).unwrap();
        for w in [1, 2] {
            let ex = Executor::with_workers(w).unwrap();
            let p = plan(OpKind::Cdist, 100, 6, Precision::P64, u64::MAX, Some(34)).unwrap();
            assert_eq!(p.num_blocks(), 9);
            assert_eq!(batched_cdist(&x, &x, &p, &ex).unwrap(), full);

            let p = plan(OpKind::Topk { k: 5 }, 100, 100, Precision::P64, u64::MAX, Some(50)).unwrap();
            assert_eq!(
                batched_topk(&full.block, 5, TopkMode::Smallest, &p, &ex).unwrap(),
                topk(&full.block, 5, TopkMode::Smallest).unwrap()
            );

            let p = plan(OpKind::Histogram { bins: 10 }, 100, 6, Precision::P64, u64::MAX, Some(3)).unwrap();
            assert_eq!(batched_histogram(&x, 10, &p, &ex).unwrap(), histogram(&x, 10).unwrap());

            let p = plan(OpKind::Ecdf, 100, 6, Precision::P64, u64::MAX, Some(4)).unwrap();
            assert_eq!(batched_ecdf(&x, &p, &ex).unwrap(), EcdfTable::fit(&x).unwrap());
        }
    }

    #[test]
    fn cdist_tiles_are_charged() {
        let x = random(50, 3, 2);
        let ex = Executor::new(crate::exec::ExecConfig {
            budget_bytes: 10 * 10 * 8 + 20 * 8,
            ..Default::default()
        })
        .unwrap();
        let p = plan_for(&ex, OpKind::Cdist, 50, 50, 3, Precision::P64).unwrap();
        assert_eq!(p.batch_size, 10);
        batched_cdist(&x, &x, &p, &ex).unwrap();
        assert_eq!(ex.peak_bytes(), 960);
    }

    proptest! {
        #[test]
        fn plans_cover_disjointly(n in 1usize..400, d in 1usize..20, budget_kb in 1u64..512, cap in prop::option::of(1usize..100)) {
            for op in [OpKind::Cdist, OpKind::Knn { k: 3 }, OpKind::Topk { k: 1 }, OpKind::Histogram { bins: 10 }] {
                let Ok(p) = plan(op, n, d, Precision::P32, budget_kb * 1024, cap) else { continue };
                prop_assert!(p.est_block_bytes <= budget_kb * 1024);
                let len = match p.axis { BatchAxis::Features => d, _ => n };
                for ranges in [p.row_blocks(), p.col_blocks()] {
                    let mut next = 0;
                    for r in ranges {
                        prop_assert_eq!(r.start, next);
                        prop_assert!(r.end > r.start && r.len() <= p.batch_size);
                        next = r.end;
                    }
                    prop_assert_eq!(next, len);
                }
                if let Some(c) = cap { prop_assert!(p.batch_size <= c); }
            }
        }
    }
}
