use std::path::PathBuf;

use crate::types::ExpressionLabel;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("config error: {0}")]
    Config(String),

    /// A backend refused one of the decoding parameters.
    #[error("config error: backend rejected parameter `{param}`: {message}")]
    RejectedParameter { param: String, message: String },

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("transport error after {attempts} attempt(s) to {endpoint}: {message}")]
    Transport {
        endpoint: String,
        attempts: u32,
        message: String,
    },

    #[error("protocol error from {endpoint}: {message}")]
    Protocol { endpoint: String, message: String },

    #[error("schema error in {path} at `{field}`: {message}")]
    Schema {
        path: PathBuf,
        field: String,
        message: String,
    },

    #[error("integrity error: {0}")]
    Integrity(String),

    #[error("insufficient pool for label {label}: {message}")]
    InsufficientPool {
        label: ExpressionLabel,
        message: String,
    },

    #[error("empty pool: {0}")]
    EmptyPool(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("coverage error, missing records: {}", .0.join(", "))]
    Coverage(Vec<String>),

    #[error("unsupported schema version {found} in {path} (this build reads up to {supported})")]
    Version {
        path: PathBuf,
        found: u32,
        supported: u32,
    },

    #[error("{stage} stage failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn in_stage(self, stage: &'static str) -> Self {
        match self {
            already @ Error::Stage { .. } => already,
            other => Error::Stage {
                stage,
                source: Box::new(other),
            },
        }
    }

    /// Process exit code: 2 config, 3 transport, 4 data integrity, 1 anything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_)
            | Error::RejectedParameter { .. }
            | Error::Argument(_)
            | Error::Version { .. } => 2,
            Error::Transport { .. } | Error::Protocol { .. } => 3,
            Error::Schema { .. }
            | Error::Integrity(_)
            | Error::InsufficientPool { .. }
            | Error::EmptyPool(_)
            | Error::InsufficientData(_)
            | Error::Degenerate(_)
            | Error::Coverage(_) => 4,
            Error::Stage { source, .. } => source.exit_code(),
            Error::Io { .. } => 1,
        }
    }
}
