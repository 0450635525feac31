//! Equal-width per-feature histograms.

use std::ops::Range;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::DenseMatrix;

/// Default bin count when none is given.
pub const DEFAULT_BINS: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureHistogram<T> {
    /// `bins + 1` edges; for a constant feature a single bin `[v, v]`.
    pub edges: Vec<T>,
    pub counts: Vec<u64>,
}

impl<T: Scalar> FeatureHistogram<T> {
    pub fn bins(&self) -> usize {
        self.counts.len()
    }

    fn lo(&self) -> T {
        self.edges[0]
    }

    fn hi(&self) -> T {
        *self.edges.last().unwrap()
    }

    /// Bin holding `x`. Values outside the fitted range go to the nearest edge
    /// bin; the maximum lands in the last bin.
    #[inline]
    pub fn locate(&self, x: T) -> usize {
        let bins = self.bins();
        let (lo, hi) = (self.lo(), self.hi());
        if bins == 1 || hi <= lo {
            return 0;
        }
        let t = (x - lo) / (hi - lo) * T::from_usize_lossy(bins);
        if !(t > T::zero()) {
            return 0;
        }
        t.floor().to_usize().unwrap_or(usize::MAX).min(bins - 1)
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

/// One histogram per feature, all over the same `n` samples.
#[derive(Debug, Clone, PartialEq)]
pub struct HistogramSet<T> {
    pub n: usize,
    pub features: Vec<FeatureHistogram<T>>,
}

impl<T: Scalar> HistogramSet<T> {
    /// Relative frequency of the bin containing `x` in feature `j`.
    pub fn frequency(&self, j: usize, x: T) -> f64 {
        let h = &self.features[j];
        h.counts[h.locate(x)] as f64 / self.n as f64
    }

    /// Join feature-block results in block order.
    pub fn union(parts: Vec<HistogramSet<T>>) -> Self {
        let n = parts.first().map_or(0, |p| p.n);
        HistogramSet {
            n,
            features: parts.into_iter().flat_map(|p| p.features).collect(),
        }
    }
}

fn feature_histogram<T: Scalar>(col: &[T], bins: usize) -> FeatureHistogram<T> {
    let lo = col.iter().copied().fold(T::infinity(), T::min);
    let hi = col.iter().copied().fold(T::neg_infinity(), T::max);
    if hi <= lo {
        return FeatureHistogram {
            edges: vec![lo, hi],
            counts: vec![col.len() as u64],
        };
    }
    let span = hi - lo;
    let b = T::from_usize_lossy(bins);
    let mut edges: Vec<T> = (0..bins)
        .map(|i| lo + span * T::from_usize_lossy(i) / b)
        .collect();
    edges.push(hi);
    let mut h = FeatureHistogram {
        edges,
        counts: vec![0; bins],
    };
    for &v in col {
        let bin = h.locate(v);
        h.counts[bin] += 1;
    }
    h
}

/// Histograms for the features in `cols`.
pub fn histogram_features<T: Scalar>(
    x: &DenseMatrix<T>,
    cols: Range<usize>,
    bins: usize,
) -> Result<HistogramSet<T>> {
    if bins == 0 {
        return Err(Error::InvalidParameter("histogram needs at least one bin".into()));
    }
    if x.n() == 0 {
        return Err(Error::Empty("histogram needs at least one sample".into()));
    }
    Ok(HistogramSet {
        n: x.n(),
        features: cols.map(|j| feature_histogram(&x.column(j), bins)).collect(),
    })
}

/// `bins` equal-width bins per feature over `[min, max]`.
pub fn histogram<T: Scalar>(x: &DenseMatrix<T>, bins: usize) -> Result<HistogramSet<T>> {
    histogram_features(x, 0..x.d(), bins)
}
