//! Row/column reductions.

use crate::error::{Error, Result};
use crate::scalar::{fold_halves, Scalar};
use crate::tensor::DenseMatrix;

/// The axis that is reduced away.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    /// Collapse rows: one result per column.
    Rows,
    /// Collapse columns: one result per row.
    Cols,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Reduction {
    Sum,
    Mean,
    Max,
    /// Population variance (divide by count).
    Var,
}

/// Reduce `values` with `how`. Sums are pairwise.
pub fn reduce<T: Scalar>(values: &[T], how: Reduction) -> T {
    let mut buf = values.to_vec();
    let count = T::from_usize_lossy(values.len());
    match how {
        Reduction::Sum => fold_halves(&mut buf),
        Reduction::Mean => fold_halves(&mut buf) / count,
        Reduction::Max => values.iter().copied().fold(T::neg_infinity(), T::max),
        Reduction::Var => {
            let mean = fold_halves(&mut buf) / count;
            let mut sq: Vec<T> = values.iter().map(|&v| (v - mean) * (v - mean)).collect();
            fold_halves(&mut sq) / count
        }
    }
}

pub fn aggregate<T: Scalar>(m: &DenseMatrix<T>, axis: Axis, how: Reduction) -> Result<Vec<T>> {
    let empty = match axis {
        Axis::Rows => m.n() == 0,
        Axis::Cols => m.d() == 0,
    };
    if empty {
        return Err(Error::Empty("cannot aggregate over an empty axis".into()));
    }
    Ok(match axis {
        Axis::Cols => m.rows().map(|r| reduce(r, how)).collect(),
        Axis::Rows => (0..m.d()).map(|j| reduce(&m.column(j), how)).collect(),
    })
}
