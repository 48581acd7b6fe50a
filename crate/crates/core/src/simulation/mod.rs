//! Synthetic panels, the Monte Carlo designs and the replication harness.

pub mod designs;
pub mod diagnostics;
pub mod dgp;
pub mod mc;

pub use designs::{
    design_clusters, design_dimension, design_imbalance, design_misspec, design_overspecified, design_sample_size,
    design_separation, DesignName, FitPlan, Scenario,
};
pub use diagnostics::{convergence_diagnostics, ConvergenceReport};
pub use dgp::{DgpSpec, ErrorKind, Generated};
pub use mc::{run_mc, run_selection_mc, McOptions, McReport, SelectionMcReport, Stat};
