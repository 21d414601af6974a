use thiserror::Error;

/// Errors raised anywhere in the library.
///
/// Each variant maps onto one CLI exit code (see [`Error::exit_code`]).
#[derive(Debug, Error)]
pub enum Error {
    #[error("input shape error: {0}")]
    Shape(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("usage error: {0}")]
    Usage(String),

    #[error("environment error: {0}")]
    Env(String),

    #[error("training diverged: {0}")]
    Diverged(String),

    #[error("budget exceeded: {0}")]
    BudgetExceeded(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("theory check failed: {0}")]
    TheoryCheckFailed(String),

    /// The message already contains the underlying error, so it is not exposed as a source.
    #[error("i/o error on {path}: {err}")]
    Io { path: String, err: std::io::Error },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl AsRef<std::path::Path>, err: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            err,
        }
    }

    /// Process exit code: 1 usage, 2 validation, 3 divergence/budget, 4 theory-check failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Usage(_) | Error::Io { .. } => 1,
            Error::Shape(_)
            | Error::Numeric(_)
            | Error::Config(_)
            | Error::Env(_)
            | Error::Domain(_)
            | Error::Parse(_) => 2,
            Error::Diverged(_) | Error::BudgetExceeded(_) => 3,
            Error::TheoryCheckFailed(_) => 4,
        }
    }
}
