use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("schema: {0}")]
    Schema(String),

    #[error("sampling: {0}")]
    Sampling(String),

    #[error("split: {0}")]
    Split(String),

    #[error("contract violated: {0}")]
    Contract(String),

    #[error("shape: {0}")]
    Shape(String),

    #[error("training diverged at epoch {epoch}, batch {batch}: {msg}")]
    Divergence { epoch: usize, batch: usize, msg: String },

    #[error("format: {0}")]
    Format(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// Short stable tag used by the command-line front end.
    pub fn category(&self) -> &'static str {
        match self {
            Error::Dimension(_) => "dimension",
            Error::Parameter(_) => "parameter",
            Error::Parse { .. } => "parse",
            Error::Schema(_) => "schema",
            Error::Sampling(_) => "sampling",
            Error::Split(_) => "split",
            Error::Contract(_) => "contract",
            Error::Shape(_) => "shape",
            Error::Divergence { .. } => "divergence",
            Error::Format(_) => "format",
            Error::Io { .. } => "io",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
