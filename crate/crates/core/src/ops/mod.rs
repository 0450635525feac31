//! Basic tensor operators: the leaves every detector is assembled from.

pub mod aggregate;
pub mod distance;
pub mod ecdf;
pub mod eigen;
pub mod histogram;
pub mod sets;
pub mod topk;

pub use aggregate::{aggregate, Axis, Reduction};
pub use distance::{cdist_sq, cdist_sq_block, cdist_sq_tracked, pair_sqdist, sqrt_distances, DistanceBlock};
pub use ecdf::{ecdf_eval, EcdfTable};
pub use eigen::{covariance, covariance_eigen, Eigen};
pub use histogram::{histogram, FeatureHistogram, HistogramSet, DEFAULT_BINS};
pub use sets::{intersect, sort_args};
pub use topk::{topk, TopKResult, TopkMode};
