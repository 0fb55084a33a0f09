use thiserror::Error;

/// Errors raised anywhere in the navigation toolkit.
#[derive(Debug, Error)]
pub enum NavError {
    /// A matrix that had to be inverted or factorized was singular or non-finite.
    #[error("numerical error: {0}")]
    Numerical(String),
    /// Input outside the domain where a quantity is defined (e.g. geodesy at the pole).
    #[error("domain error: {0}")]
    Domain(String),
    /// Invalid argument: bad time step, empty stream, mismatched lengths.
    #[error("argument error: {0}")]
    Argument(String),
    /// Malformed file content. `line` is 1-based and counts the header line.
    #[error("format error at line {line}: {message}")]
    Format { line: usize, message: String },
    /// A correction provider failed for the given epoch.
    #[error("provider error at epoch {epoch}: {message}")]
    Provider { epoch: usize, message: String },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("config error: {0}")]
    Config(String),
}

impl NavError {
    /// Stable machine-readable name of the error kind.
    pub fn kind(&self) -> &'static str {
        match self {
            NavError::Numerical(_) => "NumericalError",
            NavError::Domain(_) => "DomainError",
            NavError::Argument(_) => "ArgumentError",
            NavError::Format { .. } => "FormatError",
            NavError::Provider { .. } => "ProviderError",
            NavError::Io(_) => "IoError",
            NavError::Config(_) => "ConfigError",
        }
    }

    /// Process exit code used by the CLI for this error kind.
    pub fn exit_code(&self) -> i32 {
        match self {
            NavError::Argument(_) => 2,
            NavError::Format { .. } => 3,
            NavError::Numerical(_) => 4,
            NavError::Domain(_) => 5,
            NavError::Provider { .. } => 6,
            NavError::Io(_) => 7,
            NavError::Config(_) => 8,
        }
    }

    pub(crate) fn format(line: usize, message: impl Into<String>) -> Self {
        NavError::Format {
            line,
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, NavError>;
