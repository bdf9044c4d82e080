use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("value {value} outside range {range}")]
    Range { value: f64, range: &'static str },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    #[error("invalid input: {0}")]
    Validation(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("input too short: {0}")]
    TooShort(String),

    #[error("degenerate statistics: {0}")]
    Degenerate(String),

    #[error("training diverged at epoch {epoch}: loss = {loss}")]
    Divergence { epoch: usize, loss: f64 },

    #[error("fold {fold}: {source}")]
    Fold {
        fold: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: {source}")]
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

    pub(crate) fn degenerate(msg: impl Into<String>) -> Self {
        Error::Degenerate(msg.into())
    }

    /// True for failures that come from the numbers rather than the inputs.
    /// The bare message of string-carrying variants, otherwise the display
    /// text.
    pub fn message(&self) -> String {
        match self {
            Error::Validation(m)
            | Error::Config(m)
            | Error::Dimension(m)
            | Error::TooShort(m)
            | Error::Degenerate(m) => m.clone(),
            other => other.to_string(),
        }
    }

    pub fn is_numerical(&self) -> bool {
        match self {
            Error::Degenerate(_) | Error::Divergence { .. } => true,
            Error::Fold { source, .. } => source.is_numerical(),
            _ => false,
        }
    }
}
