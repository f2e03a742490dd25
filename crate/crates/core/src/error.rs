use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    Shape {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("non-finite value produced by {op}")]
    NonFinite { op: &'static str },

    #[error("non-finite value in layer {layer} ({op})")]
    NonFiniteInLayer { layer: usize, op: &'static str },

    #[error("training diverged at epoch {epoch}: {source}")]
    Diverged {
        epoch: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("structural error: {0}")]
    Structural(String),

    #[error("usage error: {0}")]
    Usage(String),

    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("{}:{line}: {msg}", path.display())]
    Load {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}: {source}", path.display())]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

/// Coarse failure classes, used by the CLI to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Data,
    Numeric,
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::NonFinite { .. } | Error::NonFiniteInLayer { .. } | Error::Diverged { .. } => {
                ErrorKind::Numeric
            }
            Error::Structural(_) | Error::Load { .. } | Error::Io { .. } | Error::Json { .. } => {
                ErrorKind::Data
            }
            Error::Shape { .. }
            | Error::Config(_)
            | Error::Usage(_)
            | Error::UndefinedMetric(_) => ErrorKind::Config,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn load(path: impl Into<PathBuf>, line: usize, msg: impl Into<String>) -> Self {
        Error::Load {
            path: path.into(),
            line,
            msg: msg.into(),
        }
    }
}
