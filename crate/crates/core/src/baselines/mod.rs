//! Classical intrinsic dimension estimators used as comparison points.

mod knn;
mod local_pca;
mod mle;
mod ppca;

pub use knn::{dedup_rows, knn_table, NeighborTable};
pub use local_pca::{local_pca_estimate, LocalPcaResult};
pub use mle::{mle_estimate, mle_estimate_with, mle_point_inverse, MleAggregation, MleResult};
pub use ppca::{ppca_estimate, ppca_log_evidence, PpcaResult};
