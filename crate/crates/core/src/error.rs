use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Broad failure class, used by front ends to pick an exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Config,
    Data,
    Numeric,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: {message}")]
    Malformed { line: u64, message: String },

    #[error("line {line}: non-positive price {value}")]
    NonPositivePrice { line: u64, value: f64 },

    #[error("duplicate date {0}")]
    DuplicateDate(chrono::NaiveDate),

    #[error("series too short: need at least {needed} points, got {got}")]
    TooShort { needed: usize, got: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: {0}")]
    Shape(String),

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("zero actual value at index {0}; MAPE undefined")]
    ZeroActual(usize),

    #[error("training diverged at epoch {epoch}: loss {loss}")]
    Diverged { epoch: usize, loss: f64 },

    #[error("misaligned series: {0}")]
    Misaligned(String),

    #[error("missing data: {0}")]
    Missing(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("window {window}: {source}")]
    Window {
        window: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn in_window(self, window: usize) -> Self {
        Error::Window {
            window,
            source: Box::new(self),
        }
    }

    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Config(_) | Error::InvalidArgument(_) => ErrorClass::Config,
            Error::Diverged { .. } | Error::Degenerate(_) => ErrorClass::Numeric,
            Error::Window { source, .. } => source.class(),
            _ => ErrorClass::Data,
        }
    }
}
