use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("not found: {0}")]
    NotFound(String),

    #[error("invalid catalog entry `{entry}`: {reason}")]
    InvalidCatalog { entry: String, reason: String },

    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    Shape {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },

    #[error("singular jacobian: condition number {condition:e} exceeds limit")]
    SingularJacobian { condition: f64 },

    #[error("architecture mismatch for parameter `{param}`: {reason}")]
    Architecture { param: String, reason: String },

    #[error("grasp memory bank is empty")]
    EmptyBank,

    #[error("observation history not ready: {0}")]
    NotReady(&'static str),

    #[error("non-finite value produced by {0}")]
    NonFinite(&'static str),

    #[error("config error: {0}")]
    Config(String),

    #[error("file error at {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("episode (level {level}, seed {seed}): {source}")]
    Episode {
        level: u8,
        seed: u64,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    /// Stable short identifier used in machine-readable error lines.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidArgument(_) => "invalid-argument",
            Error::NotFound(_) => "not-found",
            Error::InvalidCatalog { .. } => "invalid-catalog",
            Error::Shape { .. } => "shape-error",
            Error::SingularJacobian { .. } => "singular-jacobian",
            Error::Architecture { .. } => "architecture-error",
            Error::EmptyBank => "empty-bank",
            Error::NotReady(_) => "not-ready",
            Error::NonFinite(_) => "non-finite",
            Error::Config(_) => "config-error",
            Error::Io { .. } => "file-error",
            Error::Episode { source, .. } => source.kind(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
