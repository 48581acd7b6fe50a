use thiserror::Error;

/// Errors raised by the estimation library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid label {label:?} for cluster counts {counts:?}")]
    InvalidLabel { label: Vec<usize>, counts: Vec<usize> },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("malformed input at line {line}: {message}")]
    Input { line: usize, message: String },

    #[error("incomplete panel: {0}")]
    IncompletePanel(String),

    #[error("singular matrix (condition number {condition:.3e}): {context}")]
    Singular { condition: f64, context: String },

    #[error("enumeration of {required} assignments exceeds cap {cap}")]
    EnumerationCap { required: u128, cap: u128 },

    #[error("grid of {size} cluster-count vectors exceeds cap {cap}; reduce k_max")]
    GridCap { size: usize, cap: usize },

    #[error("fixed effects unidentified: {0}")]
    FixedEffects(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Problems with user-supplied data files, as opposed to settings.
    pub fn is_input(&self) -> bool {
        matches!(
            self,
            Error::Input { .. } | Error::IncompletePanel(_) | Error::Io(_) | Error::Json(_) | Error::Csv(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
