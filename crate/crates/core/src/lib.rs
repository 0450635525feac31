//! CPU-parallel outlier detection built from a small set of tensor operators.
//!
//! Detectors are composed from basic operators (distances, top-k, histograms,
//! ECDFs, eigendecomposition) and functional operators (k nearest neighbours,
//! neighbours within range, cosine similarity). Distance-based operators can
//! run at reduced precision with exact results ([`quantize`]), are split into
//! blocks that fit a memory budget ([`batch`]), fused so the distance matrix
//! is never materialized ([`fused`], [`fusion`]), and spread over worker
//! threads ([`exec`]).

pub mod batch;
pub mod bench;
pub mod data;
pub mod detectors;
pub mod error;
pub mod exec;
pub mod functional;
pub mod fused;
pub mod fusion;
pub mod ledger;
pub mod metrics;
pub mod ops;
pub mod quantize;
pub mod runner;
pub mod scalar;
pub mod tensor;

pub use bench::{bench, BenchReport, BenchSuite};
pub use data::{generate_data, load_csv, read_scores, write_dataset, write_scores, Dataset};
pub use detectors::{fit, Algorithm, DetectorModel, Hyperparams};
pub use error::{Error, Result};
pub use exec::{ExecConfig, Executor, LedgerMode};
pub use ledger::MemoryLedger;
pub use metrics::roc_auc;
pub use runner::{run, DataSource, RunConfig, RunSummary};
pub use scalar::{Precision, Scalar};
pub use tensor::{DenseMatrix, ScaleInfo};

pub use half::f16;

pub type Matrix16 = DenseMatrix<f16>;
pub type Matrix32 = DenseMatrix<f32>;
pub type Matrix64 = DenseMatrix<f64>;
