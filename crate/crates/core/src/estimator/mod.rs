//! The least-squares partitioning estimator and its building blocks.

mod align;
mod assign;
mod lloyd;
mod update;

pub use align::{align_labels, canonical_labels, Alignment};
pub use assign::assignment_step;
pub use lloyd::{
    initialize, lloyd_fit, run_from, run_starts, FitResult, LloydConfig, StartOutcome, StartSummary, Termination,
    UpdateMode,
};
pub use update::{full_update, normal_equations, partial_update, UpdateOutcome};

pub(crate) use update::full_update_moments;
