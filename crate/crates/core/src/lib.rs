//! Multi-block clusterwise panel regression.
//!
//! Each unit carries one discrete latent type per covariate block, and the
//! coefficient vector of a unit is the concatenation of the block parameters
//! selected by its types. Estimation minimises the pooled least-squares risk
//! jointly over parameters and assignments with a multistart Lloyd iteration.

pub mod cli;
pub mod error;
pub mod estimator;
pub mod inference;
pub mod io;
pub mod linalg;
pub mod metrics;
pub mod moments;
pub mod oracle;
pub mod panel;
pub mod rng;
pub mod selection;
pub mod simulation;
pub mod transforms;

#[doc(hidden)]
pub mod testing;

pub use error::{Error, Result};
pub use estimator::{
    align_labels, assignment_step, canonical_labels, full_update, lloyd_fit, partial_update, Alignment, FitResult,
    LloydConfig, UpdateMode,
};
pub use inference::{coverage_indicator, hac_covariance, oracle_estimate, InferenceOptions, InferenceResult};
pub use metrics::{evaluate_metrics, Metrics};
pub use panel::{composite_theta, sample_risk, Assignment, BlockSpec, ClusterConfig, PanelData, ParamSet};
