use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the laboratory.
///
/// The CLI maps each variant to a distinct exit code (see [`LabError::exit_code`]).
#[derive(Debug, Error)]
pub enum LabError {
    /// A configuration value violates a precondition.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// Two inputs that must agree do not (cutoffs, draws, epsilon ...).
    #[error("contract violation: {0}")]
    Contract(String),

    /// The solver produced NaN/inf amplitudes.
    #[error("non-finite state at t = {t}: {detail}")]
    NonFinite { t: f64, detail: String },

    /// Grid sup-norm exceeded the abort threshold.
    #[error("blow-up: grid sup {sup:.3e} at t = {t}")]
    BlowUp { t: f64, sup: f64 },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("serialization error: {0}")]
    Serde(String),
}

impl LabError {
    pub fn config(msg: impl Into<String>) -> Self {
        LabError::Config(msg.into())
    }

    pub fn contract(msg: impl Into<String>) -> Self {
        LabError::Contract(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        LabError::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit status for this error: 2 usage/config, 3 contract or numerical, 4 I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            LabError::Config(_) => 2,
            LabError::Contract(_) | LabError::NonFinite { .. } | LabError::BlowUp { .. } => 3,
            LabError::Io { .. } | LabError::Serde(_) => 4,
        }
    }
}

impl From<serde_json::Error> for LabError {
    fn from(e: serde_json::Error) -> Self {
        LabError::Serde(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, LabError>;
