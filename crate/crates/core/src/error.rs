use thiserror::Error;

/// Errors raised while building or solving a grid game.
///
/// Non-convergence of an iterative scheme is not an error; it is reported
/// through the status fields of the returned traces and reports.
#[derive(Debug, Error)]
pub enum Error {
    /// A scenario or network file does not match the expected schema.
    #[error("schema error in `{field}`: {message}")]
    Schema { field: String, message: String },

    /// The input parsed but violates a model invariant.
    #[error("validation error: {0}")]
    Validation(String),

    /// The network graph is not connected to the slack bus, so the reduced
    /// Laplacian is singular.
    #[error("singular Laplacian: buses {unreachable:?} are not connected to the slack bus")]
    DisconnectedNetwork { unreachable: Vec<String> },

    /// A matrix that the model requires to be invertible is numerically singular.
    #[error("{what} is numerically singular (condition estimate {condition:.3e})")]
    Singular { what: String, condition: f64 },

    #[error("dimension mismatch for {what}: expected {expected}, got {got}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A structural property the theory guarantees does not hold, which
    /// points at corrupted network or parameter data.
    #[error("structural error: {0}")]
    Structural(String),

    #[error("trace error: {0}")]
    Trace(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn schema(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Schema {
            field: field.into(),
            message: message.into(),
        }
    }

    /// True for errors caused by bad input rather than by the numerics.
    pub fn is_invalid_input(&self) -> bool {
        matches!(
            self,
            Error::Schema { .. }
                | Error::Validation(_)
                | Error::DisconnectedNetwork { .. }
                | Error::Singular { .. }
                | Error::Dimension { .. }
                | Error::Domain(_)
                | Error::Structural(_)
        )
    }
}
