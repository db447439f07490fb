use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("generation error in class {class}: {reason}")]
    Generation { class: String, reason: String },

    #[error("argument error: {0}")]
    Argument(String),

    #[error("cannot sample aggregation set for node {node}: {reason}")]
    Sampling { node: usize, reason: String },

    #[error("training diverged at iteration {iteration}: {what}")]
    Divergence { iteration: usize, what: String },

    #[error("estimate undefined: {0}")]
    UndefinedEstimate(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("{}:{line}: {msg}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("internal error: {0}")]
    Internal(String),

    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Divergence { .. } | Error::UndefinedEstimate(_) | Error::Internal(_)
        )
    }
}
