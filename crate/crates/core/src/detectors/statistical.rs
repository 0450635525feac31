//! Per-feature statistical detectors (HBOS, ECOD/COPOD) and PCA.

use crate::batch::{batched_ecdf, batched_histogram, plan_for, OpKind};
use crate::error::Result;
use crate::exec::Executor;
use crate::ops::ecdf::{ecdf_eval, EcdfTable};
use crate::ops::eigen::{column_means, covariance_eigen, project, Eigen};
use crate::ops::histogram::HistogramSet;
use crate::scalar::Scalar;
use crate::tensor::DenseMatrix;

use super::Scored;

/// Smoothing added to bin frequencies before the log.
pub const HBOS_ALPHA: f64 = 1e-6;

/// Components with `λ ≤ PCA_EIGEN_CUTOFF · λ₁` are dropped.
pub const PCA_EIGEN_CUTOFF: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct HbosModel<T> {
    hist: HistogramSet<T>,
}

impl<T: Scalar> HbosModel<T> {
    pub(super) fn fit(x: &DenseMatrix<T>, bins: usize, exec: &Executor) -> Result<(Self, Scored)> {
        let plan = plan_for(exec, OpKind::Histogram { bins }, x.n(), x.n(), x.d(), T::PRECISION)?;
        let model = Self {
            hist: batched_histogram(x, bins, &plan, exec)?,
        };
        let scores = model.score(x);
        Ok((model, Scored { scores, quant: None }))
    }

    /// `Σ_j −ln(freq_j(x_j) + α)`; out-of-range values use the edge bins.
    pub(super) fn score(&self, x: &DenseMatrix<T>) -> Vec<f64> {
        x.rows()
            .map(|r| {
                r.iter()
                    .enumerate()
                    .map(|(j, &v)| -(self.hist.frequency(j, v) + HBOS_ALPHA).ln())
                    .sum()
            })
            .collect()
    }

    pub fn histograms(&self) -> &HistogramSet<T> {
        &self.hist
    }

    pub(super) fn dims(&self) -> usize {
        self.hist.features.len()
    }
}

/// Two-sided ECDF tail model shared by ECOD and COPOD.
#[derive(Debug, Clone)]
pub struct EcdfModel<T> {
    left: EcdfTable<T>,
    /// Table of `−X`, so its CDF at `−x` is the right tail at `x`.
    right: EcdfTable<T>,
}

impl<T: Scalar> EcdfModel<T> {
    pub(super) fn fit(x: &DenseMatrix<T>, exec: &Executor) -> Result<(Self, Scored)> {
        let plan = plan_for(exec, OpKind::Ecdf, x.n(), x.n(), x.d(), T::PRECISION)?;
        let model = Self {
            left: batched_ecdf(x, &plan, exec)?,
            right: batched_ecdf(&x.map(|v| -v), &plan, exec)?,
        };
        let scores = model.score(x)?;
        Ok((model, Scored { scores, quant: None }))
    }

    /// `Σ_j max(−ln F_l(x_j), −ln F_r(x_j))`, with both CDFs floored at `1/(n+1)`.
    pub(super) fn score(&self, x: &DenseMatrix<T>) -> Result<Vec<f64>> {
        let fl = ecdf_eval(&self.left, x)?;
        let fr = ecdf_eval(&self.right, &x.map(|v| -v))?;
        let floor = 1.0 / (self.left.n + 1) as f64;
        let tail = |f: T| -(f.widen().max(floor)).ln();
        Ok((0..x.n())
            .map(|i| {
                fl.row(i)
                    .iter()
                    .zip(fr.row(i))
                    .map(|(&l, &r)| tail(l).max(tail(r)))
                    .sum()
            })
            .collect())
    }

    pub(super) fn dims(&self) -> usize {
        self.left.d()
    }
}

#[derive(Debug, Clone)]
pub struct PcaModel<T> {
    mean: Vec<T>,
    std: Vec<T>,
    eigen: Eigen<T>,
    components: usize,
}

impl<T: Scalar> PcaModel<T> {
    pub(super) fn fit(x: &DenseMatrix<T>) -> Result<(Self, Scored)> {
        let mean = column_means(x);
        let denom = T::from_usize_lossy(x.n() - 1);
        let std: Vec<T> = (0..x.d())
            .map(|j| {
                let ss = x.column(j).into_iter().fold(T::zero(), |a, v| {
                    let e = v - mean[j];
                    a + e * e
                });
                let s = (ss / denom).sqrt();
                if s == T::zero() {
                    T::one()
                } else {
                    s
                }
            })
            .collect();
        let mut model = Self {
            mean,
            std,
            eigen: Eigen {
                values: Vec::new(),
                vectors: DenseMatrix::zeros(0, 0),
            },
            components: 0,
        };
        let z = model.standardize(x);
        model.eigen = covariance_eigen(&z)?;
        let top = model.eigen.values[0].widen();
        model.components = model
            .eigen
            .values
            .iter()
            .take_while(|l| l.widen() > PCA_EIGEN_CUTOFF * top)
            .count();
        let scores = model.score(x)?;
        Ok((model, Scored { scores, quant: None }))
    }

    fn standardize(&self, x: &DenseMatrix<T>) -> DenseMatrix<T> {
        let d = x.d();
        let vals = x
            .values()
            .iter()
            .enumerate()
            .map(|(idx, &v)| (v - self.mean[idx % d]) / self.std[idx % d])
            .collect();
        DenseMatrix::from_vec(x.n(), d, vals).expect("same shape")
    }

    /// `Σ_j y_j² / λ_j` over the retained components.
    pub(super) fn score(&self, x: &DenseMatrix<T>) -> Result<Vec<f64>> {
        let y = project(&self.standardize(x), &self.eigen, self.components)?;
        Ok(y.rows()
            .map(|r| {
                r.iter()
                    .zip(&self.eigen.values)
                    .fold(T::zero(), |a, (&v, &l)| a + v * v / l)
                    .widen()
            })
            .collect())
    }

    pub fn components(&self) -> usize {
        self.components
    }

    pub(super) fn dims(&self) -> usize {
        self.mean.len()
    }
}
