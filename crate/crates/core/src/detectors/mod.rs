//! Outlier detectors behind one `fit` / `decision_function` / `predict`
//! interface. Higher scores are more outlying for every algorithm.

mod classifier;
mod neighbors;
mod statistical;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Executor;
use crate::quantize::QuantReport;
use crate::scalar::{Precision, Scalar};
use crate::tensor::{min_max_scale, DenseMatrix, ScaleInfo};

pub use classifier::knn_classify;
pub use neighbors::NeighborModel;
pub use statistical::{EcdfModel, HbosModel, PcaModel, PCA_EIGEN_CUTOFF};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Knn,
    Lof,
    Abod,
    Hbos,
    Pca,
    Ecod,
    /// Two-sided ECDF tails without skewness correction; same scores as ECOD.
    Copod,
}

impl Algorithm {
    pub const ALL: [Algorithm; 7] = [
        Algorithm::Knn,
        Algorithm::Lof,
        Algorithm::Abod,
        Algorithm::Hbos,
        Algorithm::Pca,
        Algorithm::Ecod,
        Algorithm::Copod,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Knn => "knn",
            Algorithm::Lof => "lof",
            Algorithm::Abod => "abod",
            Algorithm::Hbos => "hbos",
            Algorithm::Pca => "pca",
            Algorithm::Ecod => "ecod",
            Algorithm::Copod => "copod",
        }
    }

    /// Neighbour count used when none is given.
    pub fn default_k(self) -> usize {
        match self {
            Algorithm::Lof => 20,
            _ => 5,
        }
    }

    pub fn uses_neighbors(self) -> bool {
        matches!(self, Algorithm::Knn | Algorithm::Lof | Algorithm::Abod)
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown algorithm `{s}` (expected one of knn, lof, abod, hbos, pca, ecod, copod)"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    /// Neighbour count; `None` picks [`Algorithm::default_k`].
    pub k: Option<usize>,
    /// Histogram bins for HBOS.
    pub bins: usize,
    /// Expected outlier fraction, in `(0, 0.5)`.
    pub contamination: f64,
    /// Evaluate neighbour search at this precision with exact results.
    pub quantize: Option<Precision>,
    /// Min-max scale (fit on train) before neighbour search.
    pub min_max: bool,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Self {
            k: None,
            bins: crate::ops::DEFAULT_BINS,
            contamination: 0.1,
            quantize: None,
            min_max: false,
        }
    }
}

impl Hyperparams {
    pub fn k_for(&self, algo: Algorithm) -> usize {
        self.k.unwrap_or_else(|| algo.default_k())
    }

    fn validate(&self, algo: Algorithm, n: usize) -> Result<()> {
        if !(self.contamination > 0.0 && self.contamination < 0.5) {
            return Err(Error::InvalidParameter(format!(
                "contamination must be in (0, 0.5), got {}",
                self.contamination
            )));
        }
        if n < 2 {
            return Err(Error::InvalidParameter(format!("need at least 2 training rows, got {n}")));
        }
        if algo.uses_neighbors() {
            let k = self.k_for(algo);
            let min = if algo == Algorithm::Abod { 2 } else { 1 };
            if k < min || k >= n {
                return Err(Error::KOutOfRange { k, max: n - 1 });
            }
        }
        if algo == Algorithm::Hbos && self.bins == 0 {
            return Err(Error::InvalidParameter("bins must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
enum Fitted<T> {
    Neighbors(NeighborModel<T>),
    Hbos(HbosModel<T>),
    Pca(PcaModel<T>),
    Ecdf(EcdfModel<T>),
}

/// A fitted detector. Immutable after `fit`; scoring new data takes `&self`.
#[derive(Debug, Clone)]
pub struct DetectorModel<T> {
    algo: Algorithm,
    params: Hyperparams,
    scale: Option<ScaleInfo>,
    state: Fitted<T>,
    train_scores: Vec<f64>,
    threshold: f64,
    fit_report: Option<QuantReport>,
}

/// Scores plus the quantization tally of the call, if any.
#[derive(Debug, Clone, PartialEq)]
pub struct Scored {
    pub scores: Vec<f64>,
    pub quant: Option<QuantReport>,
}

impl<T: Scalar> DetectorModel<T> {
    pub fn fit(algo: Algorithm, x: &DenseMatrix<T>, params: &Hyperparams, exec: &Executor) -> Result<Self> {
        x.check_finite()?;
        params.validate(algo, x.n())?;
        let (scale, xs) = if params.min_max && algo.uses_neighbors() {
            let (xs, info) = min_max_scale(x)?;
            (Some(info), Some(xs))
        } else {
            (None, None)
        };
        let x = xs.as_ref().unwrap_or(x);
        let (state, scored) = match algo {
            Algorithm::Knn | Algorithm::Lof | Algorithm::Abod => {
                let (m, s) = NeighborModel::fit(algo, x, params.k_for(algo), params.quantize, exec)?;
                (Fitted::Neighbors(m), s)
            }
            Algorithm::Hbos => {
                let (m, s) = HbosModel::fit(x, params.bins, exec)?;
                (Fitted::Hbos(m), s)
            }
            Algorithm::Pca => {
                let (m, s) = PcaModel::fit(x)?;
                (Fitted::Pca(m), s)
            }
            Algorithm::Ecod | Algorithm::Copod => {
                let (m, s) = EcdfModel::fit(x, exec)?;
                (Fitted::Ecdf(m), s)
            }
        };
        let threshold = threshold_quantile(&scored.scores, params.contamination);
        Ok(Self {
            algo,
            params: params.clone(),
            scale,
            state,
            train_scores: scored.scores,
            threshold,
            fit_report: scored.quant,
        })
    }

    /// Scores of new rows against the fitted state.
    pub fn decision_function(&self, x: &DenseMatrix<T>, exec: &Executor) -> Result<Vec<f64>> {
        Ok(self.score(x, exec)?.scores)
    }

    pub fn score(&self, x: &DenseMatrix<T>, exec: &Executor) -> Result<Scored> {
        x.check_finite()?;
        if x.d() != self.dims() {
            return Err(Error::DimensionMismatch(format!(
                "model was fit on {} features, input has {}",
                self.dims(),
                x.d()
            )));
        }
        let scaled = match &self.scale {
            Some(info) => Some(info.apply(x)?),
            None => None,
        };
        let x = scaled.as_ref().unwrap_or(x);
        match &self.state {
            Fitted::Neighbors(m) => m.score(x, exec),
            Fitted::Hbos(m) => Ok(Scored {
                scores: m.score(x),
                quant: None,
            }),
            Fitted::Pca(m) => Ok(Scored {
                scores: m.score(x)?,
                quant: None,
            }),
            Fitted::Ecdf(m) => Ok(Scored {
                scores: m.score(x)?,
                quant: None,
            }),
        }
    }

    /// 1 where the score exceeds the training threshold.
    pub fn predict(&self, x: &DenseMatrix<T>, exec: &Executor) -> Result<Vec<u8>> {
        Ok(labels_for(&self.decision_function(x, exec)?, self.threshold))
    }

    /// Scores of the training rows (neighbour sets exclude self).
    pub fn decision_scores(&self) -> &[f64] {
        &self.train_scores
    }

    pub fn labels(&self) -> Vec<u8> {
        labels_for(&self.train_scores, self.threshold)
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn algorithm(&self) -> Algorithm {
        self.algo
    }

    pub fn params(&self) -> &Hyperparams {
        &self.params
    }

    pub fn scale_info(&self) -> Option<&ScaleInfo> {
        self.scale.as_ref()
    }

    /// Quantization tally of the training pass.
    pub fn fit_report(&self) -> Option<&QuantReport> {
        self.fit_report.as_ref()
    }

    fn dims(&self) -> usize {
        match &self.state {
            Fitted::Neighbors(m) => m.dims(),
            Fitted::Hbos(m) => m.dims(),
            Fitted::Pca(m) => m.dims(),
            Fitted::Ecdf(m) => m.dims(),
        }
    }
}

/// Convenience wrapper around [`DetectorModel::fit`].
pub fn fit<T: Scalar>(algo: Algorithm, x: &DenseMatrix<T>, params: &Hyperparams, exec: &Executor) -> Result<DetectorModel<T>> {
    DetectorModel::fit(algo, x, params, exec)
}

pub fn labels_for(scores: &[f64], threshold: f64) -> Vec<u8> {
    scores.iter().map(|&s| u8::from(s > threshold)).collect()
}

/// Linearly interpolated `(1 − c)` quantile of the finite scores
/// (`+∞` when there are none).
pub fn threshold_quantile(scores: &[f64], contamination: f64) -> f64 {
    let mut s: Vec<f64> = scores.iter().copied().filter(|v| v.is_finite()).collect();
    if s.is_empty() {
        return f64::INFINITY;
    }
    s.sort_by(f64::total_cmp);
    let pos = (1.0 - contamination) * (s.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    s[lo] + (s[hi] - s[lo]) * (pos - lo as f64)
}
