use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("singular system: {0}")]
    Singular(String),
    #[error("no convergence: {0}")]
    NoConvergence(String),
    #[error("config: {0}")]
    Config(String),
    #[error("missing required config key `{0}`")]
    MissingKey(String),
    #[error("unknown config key `{0}`")]
    UnknownKey(String),
    #[error("parse error in {path}: {msg}")]
    Parse { path: PathBuf, msg: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Short stable name of the variant, for machine-readable reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Dimension(_) => "dimension",
            Error::InvalidArgument(_) => "invalid-argument",
            Error::NonFinite(_) => "non-finite",
            Error::Singular(_) => "singular",
            Error::NoConvergence(_) => "no-convergence",
            Error::Config(_) => "config",
            Error::MissingKey(_) => "missing-key",
            Error::UnknownKey(_) => "unknown-key",
            Error::Parse { .. } => "parse",
            Error::Io { .. } => "io",
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, msg: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            msg: msg.into(),
        }
    }
}

/// Fails with [`Error::NonFinite`] when any entry is NaN or infinite.
pub(crate) fn ensure_finite(what: &str, values: &[f64]) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(format!("{what}: {values:?}")))
    }
}
