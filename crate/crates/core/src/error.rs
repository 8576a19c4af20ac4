use thiserror::Error;

/// Errors raised by the numerical kernels, charts and optimizers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("expected a square matrix, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },

    #[error("non-finite entry in {0}")]
    NonFinite(&'static str),

    #[error("matrix is not positive definite (offending eigenvalue {0:e})")]
    NotSpd(f64),

    #[error("singular matrix in {0}")]
    Singular(&'static str),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("coordinate element is not in the {0} subspace")]
    Subspace(&'static str),

    #[error("gradient data does not match the {0} chart")]
    GradData(&'static str),

    #[error("incompatible charts: {0}")]
    Incompatible(String),

    #[error("unknown {what} `{name}`")]
    Unknown { what: &'static str, name: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("non-finite loss at iteration {0}")]
    Diverged(usize),
}

pub type Result<T> = std::result::Result<T, Error>;
