use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A bag or checkpoint file did not match the expected binary layout.
    #[error("format error in field `{field}`: {detail}")]
    Format { field: &'static str, detail: String },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("sizing error: {0}")]
    Sizing(String),

    #[error("insufficient instances: strategy needs {needed} tiles, bag has {available}")]
    InsufficientInstances { needed: usize, available: usize },

    #[error("degenerate batch: no observed events")]
    DegenerateBatch,

    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("undefined test: {0}")]
    UndefinedTest(String),

    #[error("optimization error: {0}")]
    Optimization(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("I/O error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Coarse grouping used by the CLI to pick exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Config,
    Data,
    Optimization,
    Io,
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Config(_) | Error::Validation(_) => ErrorClass::Config,
            Error::Optimization(_) | Error::DegenerateBatch => ErrorClass::Optimization,
            Error::Io { .. } => ErrorClass::Io,
            Error::Format { .. }
            | Error::Shape(_)
            | Error::Sizing(_)
            | Error::InsufficientInstances { .. }
            | Error::UndefinedMetric(_)
            | Error::UndefinedTest(_)
            | Error::Data(_) => ErrorClass::Data,
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Prefixes the message with context such as a fold or patient id.
    pub fn context(self, ctx: impl std::fmt::Display) -> Self {
        match self {
            Error::Validation(m) => Error::Validation(format!("{ctx}: {m}")),
            Error::Shape(m) => Error::Shape(format!("{ctx}: {m}")),
            Error::Sizing(m) => Error::Sizing(format!("{ctx}: {m}")),
            Error::UndefinedMetric(m) => Error::UndefinedMetric(format!("{ctx}: {m}")),
            Error::UndefinedTest(m) => Error::UndefinedTest(format!("{ctx}: {m}")),
            Error::Optimization(m) => Error::Optimization(format!("{ctx}: {m}")),
            Error::Data(m) => Error::Data(format!("{ctx}: {m}")),
            Error::Config(m) => Error::Config(format!("{ctx}: {m}")),
            Error::DegenerateBatch => Error::Optimization(format!("{ctx}: degenerate batch")),
            Error::InsufficientInstances { needed, available } => Error::Data(format!(
                "{ctx}: strategy needs {needed} tiles, bag has {available}"
            )),
            other => other,
        }
    }
}
