//! Functional-data pipeline for periodic light curves: phase folding,
//! penalized B-spline smoothing, functional PCA, Ward clustering and
//! connectivity-based choice of the number of clusters.

// `!(x > 0.0)` style guards are intentional: they reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bspline;
pub mod catalog;
pub mod cluster;
pub mod error;
pub mod fpca;
pub mod io;
pub mod par;
pub mod phase_fold;
pub mod pipeline;
pub mod plot;
pub mod simgen;
pub mod smoother;
pub mod validity;

pub use bspline::BasisSystem;
pub use catalog::{RawLightCurve, StarRecord};
pub use cluster::{ward_linkage, ClusterAssignment, Dendrogram};
pub use error::{Error, Result};
pub use fpca::{fpca, FpcaResult};
pub use phase_fold::PhasedCurve;
pub use pipeline::{run_pipeline, PipelineConfig, RunSummary};
pub use smoother::{FunctionalDataSet, LambdaChoice, LambdaGrid, SmoothFit, Smoother};
pub use validity::{percent_correct, select_k, LabelMatching};
