//! Right-continuous empirical CDF tables (`F(x) = #{t ≤ x} / n`).

use std::ops::Range;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::DenseMatrix;

/// Sorted training values per feature.
#[derive(Debug, Clone, PartialEq)]
pub struct EcdfTable<T> {
    pub n: usize,
    pub features: Vec<Vec<T>>,
}

impl<T: Scalar> EcdfTable<T> {
    pub fn fit(x: &DenseMatrix<T>) -> Result<Self> {
        Self::fit_features(x, 0..x.d())
    }

    pub fn fit_features(x: &DenseMatrix<T>, cols: Range<usize>) -> Result<Self> {
        if x.n() == 0 {
            return Err(Error::Empty("ecdf needs at least one sample".into()));
        }
        let features = cols
            .map(|j| {
                let mut c = x.column(j);
                c.sort_by(|a, b| crate::ops::topk::float_cmp(*a, *b));
                c
            })
            .collect();
        Ok(Self { n: x.n(), features })
    }

    pub fn union(parts: Vec<EcdfTable<T>>) -> Self {
        EcdfTable {
            n: parts.first().map_or(0, |p| p.n),
            features: parts.into_iter().flat_map(|p| p.features).collect(),
        }
    }

    pub fn d(&self) -> usize {
        self.features.len()
    }

    /// Fraction of training values in feature `j` that are `≤ x`.
    #[inline]
    pub fn cdf(&self, j: usize, x: T) -> f64 {
        let col = &self.features[j];
        col.partition_point(|&v| v <= x) as f64 / self.n as f64
    }
}

/// Evaluate the table at every entry of `x`.
pub fn ecdf_eval<T: Scalar>(table: &EcdfTable<T>, x: &DenseMatrix<T>) -> Result<DenseMatrix<T>> {
    if x.d() != table.d() {
        return Err(Error::DimensionMismatch(format!(
            "ecdf table has {} features, query has {}",
            table.d(),
            x.d()
        )));
    }
    let mut out = Vec::with_capacity(x.n() * x.d());
    for r in x.rows() {
        out.extend(r.iter().enumerate().map(|(j, &v)| T::from_f64_rne(table.cdf(j, v))));
    }
    DenseMatrix::from_vec(x.n(), x.d(), out)
}
