use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Input outside its documented range.
    #[error("validation error: {0}")]
    Validation(String),

    /// A simulation or analysis setup that cannot be realised as requested.
    #[error("configuration error: {0}")]
    Configuration(String),

    /// Time step violates the Courant bound.
    #[error("stability error: {0}")]
    Stability(String),

    #[error("placement error: {0}")]
    Placement(String),

    /// The time-stepping diverged.
    #[error("instability: {0}")]
    Instability(String),

    /// Results that violate a physical bound, usually broken normalisation.
    #[error("consistency error: {0}")]
    Consistency(String),

    /// Measured data that cannot be analysed.
    #[error("data error: {0}")]
    Data(String),

    #[error("fit did not converge after {evaluations} evaluations ({reason}); residual trace: {trace:?}")]
    Fit {
        reason: String,
        evaluations: usize,
        trace: Vec<f64>,
    },

    #[error("result store corrupted at {path}: {reason}")]
    StoreCorrupt { path: PathBuf, reason: String },

    #[error("{path}:{line}: {reason}")]
    Parse {
        path: PathBuf,
        line: usize,
        reason: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code: 1 validation, 2 solver failure, 3 I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Validation(_)
            | Error::Configuration(_)
            | Error::Placement(_)
            | Error::Data(_)
            | Error::Parse { .. }
            | Error::Json(_) => 1,
            Error::Stability(_)
            | Error::Instability(_)
            | Error::Consistency(_)
            | Error::Fit { .. } => 2,
            Error::StoreCorrupt { .. } | Error::Io(_) => 3,
        }
    }
}

pub(crate) fn validation(msg: impl Into<String>) -> Error {
    Error::Validation(msg.into())
}
