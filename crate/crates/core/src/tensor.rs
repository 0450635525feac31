//! Dense row-major matrices tagged with their element precision.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ledger::{Allocation, MemoryLedger};
use crate::scalar::{Precision, Scalar};

/// Row-major `n × d` matrix. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix<T> {
    n: usize,
    d: usize,
    values: Vec<T>,
}

impl<T: Scalar> DenseMatrix<T> {
    pub fn from_vec(n: usize, d: usize, values: Vec<T>) -> Result<Self> {
        if n.checked_mul(d) != Some(values.len()) {
            return Err(Error::DimensionMismatch(format!(
                "{} values cannot form a {n}x{d} matrix",
                values.len()
            )));
        }
        Ok(Self { n, d, values })
    }

    pub fn zeros(n: usize, d: usize) -> Self {
        Self {
            n,
            d,
            values: vec![T::zero(); n * d],
        }
    }

    /// Build from rows; every row must have the same length.
    pub fn from_rows<R: AsRef<[T]>>(rows: &[R]) -> Result<Self> {
        let d = rows.first().map_or(0, |r| r.as_ref().len());
        let mut values = Vec::with_capacity(rows.len() * d);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != d {
                return Err(Error::DimensionMismatch(format!(
                    "row {i} has {} columns, expected {d}",
                    r.len()
                )));
            }
            values.extend_from_slice(r);
        }
        Ok(Self {
            n: rows.len(),
            d,
            values,
        })
    }

    /// Convenience constructor from `f64` rows, rounding into `T`.
    pub fn from_f64_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let conv: Vec<Vec<T>> = rows
            .iter()
            .map(|r| r.as_ref().iter().map(|&v| T::from_f64_rne(v)).collect())
            .collect();
        Self::from_rows(&conv)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn precision(&self) -> Precision {
        T::PRECISION
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[T] {
        &self.values[i * self.d..(i + 1) * self.d]
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.values[i * self.d + j]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[T]> + '_ {
        (0..self.n).map(move |i| self.row(i))
    }

    pub fn column(&self, j: usize) -> Vec<T> {
        (0..self.n).map(|i| self.get(i, j)).collect()
    }

    /// Rows `range` as a new matrix.
    pub fn slice_rows(&self, range: std::ops::Range<usize>) -> Self {
        Self {
            n: range.len(),
            d: self.d,
            values: self.values[range.start * self.d..range.end * self.d].to_vec(),
        }
    }

    /// Column subset, in the given order (the feature-sampler view).
    pub fn select_columns(&self, cols: &[usize]) -> Self {
        let mut values = Vec::with_capacity(self.n * cols.len());
        for r in self.rows() {
            values.extend(cols.iter().map(|&c| r[c]));
        }
        Self {
            n: self.n,
            d: cols.len(),
            values,
        }
    }

    /// Copy of the listed rows, in order.
    pub fn select_rows(&self, rows: &[usize]) -> Self {
        let mut values = Vec::with_capacity(rows.len() * self.d);
        for &i in rows {
            values.extend_from_slice(self.row(i));
        }
        Self {
            n: rows.len(),
            d: self.d,
            values,
        }
    }

    pub fn transpose(&self) -> Self {
        let mut values = Vec::with_capacity(self.values.len());
        for j in 0..self.d {
            values.extend((0..self.n).map(|i| self.get(i, j)));
        }
        Self {
            n: self.d,
            d: self.n,
            values,
        }
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            n: self.n,
            d: self.d,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    /// First non-finite entry, if any.
    pub fn check_finite(&self) -> Result<()> {
        match self.values.iter().position(|v| !v.is_finite()) {
            Some(p) => Err(Error::NonFinite {
                row: p / self.d.max(1),
                col: p % self.d.max(1),
            }),
            None => Ok(()),
        }
    }

    /// Largest absolute entry, as `f64`.
    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.widen().abs()))
    }

    pub fn to_f64(&self) -> DenseMatrix<f64> {
        cast(self)
    }

    pub fn byte_size(&self) -> u64 {
        (self.values.len() * T::PRECISION.bytes_per_value()) as u64
    }
}

/// Convert to another precision with round-to-nearest-even.
///
/// The widening to `f64` is exact, so each value is rounded exactly once.
pub fn cast<T: Scalar, U: Scalar>(x: &DenseMatrix<T>) -> DenseMatrix<U> {
    DenseMatrix {
        n: x.n,
        d: x.d,
        values: x.values.iter().map(|&v| U::from_f64_rne(v.widen())).collect(),
    }
}

/// [`cast`] of the rows in `range` only.
pub fn cast_rows<T: Scalar, U: Scalar>(x: &DenseMatrix<T>, range: std::ops::Range<usize>) -> DenseMatrix<U> {
    let d = x.d;
    DenseMatrix {
        n: range.len(),
        d,
        values: x.values[range.start * d..range.end * d]
            .iter()
            .map(|&v| U::from_f64_rne(v.widen()))
            .collect(),
    }
}

/// [`cast`] with the new buffer charged to `ledger`.
pub fn cast_tracked<'l, T: Scalar, U: Scalar>(
    x: &DenseMatrix<T>,
    ledger: &'l MemoryLedger,
) -> Result<(DenseMatrix<U>, Allocation<'l>)> {
    let grant = ledger.alloc_values(x.values.len(), U::PRECISION.bytes_per_value())?;
    Ok((cast(x), grant))
}

/// Per-column affine map fitted by [`min_max_scale`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleInfo {
    pub per_column_min: Vec<f64>,
    pub per_column_max: Vec<f64>,
    /// Largest absolute value seen in data transformed by this map so far.
    pub x_max: f64,
}

impl ScaleInfo {
    /// Apply the fitted map to new rows. Values outside `[0, 1]` are kept.
    pub fn apply<T: Scalar>(&self, x: &DenseMatrix<T>) -> Result<DenseMatrix<T>> {
        if x.d() != self.per_column_min.len() {
            return Err(Error::DimensionMismatch(format!(
                "scaler fitted on {} columns, got {}",
                self.per_column_min.len(),
                x.d()
            )));
        }
        let d = x.d();
        let mut values = Vec::with_capacity(x.values.len());
        for (p, &v) in x.values.iter().enumerate() {
            let j = p % d;
            let lo = T::from_f64_rne(self.per_column_min[j]);
            let hi = T::from_f64_rne(self.per_column_max[j]);
            let span = hi - lo;
            values.push(if span > T::zero() { (v - lo) / span } else { T::zero() });
        }
        Ok(DenseMatrix {
            n: x.n,
            d,
            values,
        })
    }

    /// `x_max` over the training data and `other` together.
    pub fn x_max_with<T: Scalar>(&self, other: &DenseMatrix<T>) -> f64 {
        self.x_max.max(other.max_abs())
    }
}

/// Map every column onto `[0, 1]` by `(x - min) / (max - min)`.
///
/// Constant columns map to all zeros.
pub fn min_max_scale<T: Scalar>(x: &DenseMatrix<T>) -> Result<(DenseMatrix<T>, ScaleInfo)> {
    if x.n() == 0 {
        return Err(Error::Empty("min_max_scale needs at least one row".into()));
    }
    let d = x.d();
    let mut lo = vec![f64::INFINITY; d];
    let mut hi = vec![f64::NEG_INFINITY; d];
    for r in x.rows() {
        for (j, &v) in r.iter().enumerate() {
            let v = v.widen();
            lo[j] = lo[j].min(v);
            hi[j] = hi[j].max(v);
        }
    }
    let mut info = ScaleInfo {
        per_column_min: lo,
        per_column_max: hi,
        x_max: 0.0,
    };
    let scaled = info.apply(x)?;
    info.x_max = scaled.max_abs();
    Ok((scaled, info))
}
