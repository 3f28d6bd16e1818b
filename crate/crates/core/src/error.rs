use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Error type shared by every solver module.
#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid interval: lower bound {lo} must lie below upper bound {hi}")]
    InvalidInterval { lo: f64, hi: f64 },

    /// Evaluation left the domain of a model nonlinearity. Carries the name
    /// of the condition that could not be evaluated.
    #[error("domain error ({condition}): {message}")]
    Domain { condition: String, message: String },

    #[error(
        "prox solve did not converge after {iterations} iterations \
         (last iterate {last_iterate:e}, residual {residual:e})"
    )]
    ProxFailure {
        iterations: usize,
        last_iterate: f64,
        residual: f64,
    },

    #[error("linear solver did not converge in {iterations} iterations (relative residual {residual:e})")]
    LinearNonConvergence { iterations: usize, residual: f64 },

    #[error("singular tridiagonal system: zero pivot at row {row}")]
    SingularSystem { row: usize },

    #[error(
        "time step too large: diagonal safeguard margin {margin:e} at cell {cell}; reduce tau"
    )]
    StepSize { cell: usize, margin: f64 },

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("cell {cell}: {source}")]
    AtCell {
        cell: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn at_cell(self, cell: usize) -> Error {
        Error::AtCell {
            cell,
            source: Box::new(self),
        }
    }
}
