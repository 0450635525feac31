//! Squared Euclidean distances via the norm decomposition
//! `‖a‖² + ‖b‖² − 2·a·b`.
//!
//! Evaluation order is fixed: squared norms first (pairwise-summed), then
//! `(‖a‖² + ‖b‖²) − (a·b + a·b)`. The rounding analysis in
//! [`crate::quantize`] assumes exactly this order, and every path in the crate
//! (blocked, fused, recomputed) goes through [`combine`] so a given pair always
//! yields the same bits.

use std::ops::Range;

use crate::error::{Error, Result};
use crate::ledger::MemoryLedger;
use crate::scalar::{Scalar, LANES};
use crate::tensor::DenseMatrix;

/// A tile of squared distances positioned inside a larger `rows × cols` grid.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceBlock<T> {
    pub row_offset: usize,
    pub col_offset: usize,
    pub block: DenseMatrix<T>,
}

impl<T: Scalar> DistanceBlock<T> {
    /// Value for the global pair `(i, j)`.
    pub fn at(&self, i: usize, j: usize) -> T {
        self.block.get(i - self.row_offset, j - self.col_offset)
    }
}

/// Squared norm of every row in `range`.
pub fn row_norms<T: Scalar>(x: &DenseMatrix<T>, range: Range<usize>) -> Vec<T> {
    let mut scratch = Vec::with_capacity(x.d());
    range
        .map(|i| T::dot_pairwise(x.row(i), x.row(i), &mut scratch))
        .collect()
}

/// Combine precomputed squared norms and the inner product; negatives clamp to 0.
#[inline(always)]
pub fn combine<T: Scalar>(norm_a: T, norm_b: T, dot: T) -> T {
    let v = (norm_a + norm_b) - (dot + dot);
    if v < T::zero() {
        T::zero()
    } else {
        v
    }
}

/// Squared distance of a single pair, bit-identical to the blocked kernels.
pub fn pair_sqdist<T: Scalar>(a: &[T], b: &[T], scratch: &mut Vec<T>) -> T {
    let na = T::dot_pairwise(a, a, scratch);
    let nb = T::dot_pairwise(b, b, scratch);
    let dot = T::dot_pairwise(a, b, scratch);
    combine(na, nb, dot)
}

/// Fill `out` (row-major `rows.len() × cols.len()`) with squared distances
/// between `a[rows]` and `b[cols]`, given their precomputed norms.
pub fn fill_block<T: Scalar>(
    a: &DenseMatrix<T>,
    a_norms: &[T],
    rows: Range<usize>,
    b: &DenseMatrix<T>,
    b_norms: &[T],
    cols: Range<usize>,
    out: &mut [T],
) {
    let width = cols.len();
    debug_assert_eq!(out.len(), rows.len() * width);
    debug_assert_eq!(a_norms.len(), rows.len());
    debug_assert_eq!(b_norms.len(), width);
    let mut scratch = Vec::with_capacity(a.d());
    let mut lanes = Vec::with_capacity(a.d());
    let full = width - width % LANES;
    for (ri, i) in rows.enumerate() {
        let ar = a.row(i);
        let dst = &mut out[ri * width..(ri + 1) * width];
        for c in (0..full).step_by(LANES) {
            let j = cols.start + c;
            let dots = T::dot_pairwise_lanes(ar, std::array::from_fn(|l| b.row(j + l)), &mut lanes);
            for l in 0..LANES {
                dst[c + l] = combine(a_norms[ri], b_norms[c + l], dots[l]);
            }
        }
        for c in full..width {
            let dot = T::dot_pairwise(ar, b.row(cols.start + c), &mut scratch);
            dst[c] = combine(a_norms[ri], b_norms[c], dot);
        }
    }
}

fn check_dims<T: Scalar>(a: &DenseMatrix<T>, b: &DenseMatrix<T>) -> Result<()> {
    if a.d() != b.d() {
        return Err(Error::DimensionMismatch(format!(
            "cdist operands have {} and {} columns",
            a.d(),
            b.d()
        )));
    }
    Ok(())
}

/// Full `a.n() × b.n()` matrix of squared distances.
pub fn cdist_sq<T: Scalar>(a: &DenseMatrix<T>, b: &DenseMatrix<T>) -> Result<DistanceBlock<T>> {
    cdist_sq_block(a, 0..a.n(), b, 0..b.n())
}

/// One tile of the distance matrix.
pub fn cdist_sq_block<T: Scalar>(
    a: &DenseMatrix<T>,
    rows: Range<usize>,
    b: &DenseMatrix<T>,
    cols: Range<usize>,
) -> Result<DistanceBlock<T>> {
    check_dims(a, b)?;
    let an = row_norms(a, rows.clone());
    let bn = row_norms(b, cols.clone());
    let mut out = vec![T::zero(); rows.len() * cols.len()];
    fill_block(a, &an, rows.clone(), b, &bn, cols.clone(), &mut out);
    Ok(DistanceBlock {
        row_offset: rows.start,
        col_offset: cols.start,
        block: DenseMatrix::from_vec(rows.len(), cols.len(), out)?,
    })
}

/// [`cdist_sq`] whose output buffer is charged to `ledger` for the duration
/// of the call. Used when the full matrix is an intermediate.
pub fn cdist_sq_tracked<T: Scalar>(
    a: &DenseMatrix<T>,
    b: &DenseMatrix<T>,
    ledger: &MemoryLedger,
) -> Result<DistanceBlock<T>> {
    check_dims(a, b)?;
    let _grant = ledger.alloc_values(a.n().saturating_mul(b.n()), T::PRECISION.bytes_per_value())?;
    cdist_sq(a, b)
}

/// Element-wise square root, for detectors defined on true distances.
pub fn sqrt_distances<T: Scalar>(m: &DenseMatrix<T>) -> DenseMatrix<T> {
    m.map(|v| v.sqrt())
}
