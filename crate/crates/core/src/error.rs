use thiserror::Error;

/// Crate-wide error type. Variants are grouped by the failing stage so the
/// CLI can map them onto exit codes (usage = 1, data = 2, numeric = 3).
#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("manifest {path} line {line}: {msg}")]
    Manifest {
        path: String,
        line: usize,
        msg: String,
    },
    #[error("invalid record {sample_id}: {msg}")]
    InvalidRecord { sample_id: String, msg: String },
    #[error("invalid label space: {0}")]
    LabelSpace(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("infeasible sampling plan: {0}")]
    Sampling(String),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("dimension mismatch: {0}")]
    Shape(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// CLI exit code for this error per the interface contract.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::LabelSpace(_) => 1,
            Error::Numeric(_) => 3,
            _ => 2,
        }
    }
}
