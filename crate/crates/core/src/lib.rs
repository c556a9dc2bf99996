//! Corrected kernel PCA for change-point detection and clustering.
// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cluster;
pub mod data;
pub mod detect;
pub mod dimsel;
pub mod error;
pub mod kernels;
pub mod operators;
pub mod partition;
pub mod reduction;
pub mod simdata;

pub use cluster::{
    iterative_subspace_cluster, kmeans, rand_index, segmentation_rand_index, ClusterOutcome,
    IterClusterConfig,
};
pub use data::DataMatrix;
pub use detect::{
    detect_pipeline, divisive_segment, ChangePointResult, DetectorConfig, PipelineConfig,
    PipelineMode,
};
pub use dimsel::{trr_select, TrrConfig};
pub use error::{CkpcaError, Result};
pub use kernels::{gram, select_bandwidth, KernelFamily, KernelSpec};
pub use operators::{changepoint_operators, cluster_operators, make_segments, CenteringPair};
pub use partition::Partition;
pub use reduction::{reduce, ReduceConfig, ReducedData};
pub use simdata::{generate, Scenario, ScenarioKind};
