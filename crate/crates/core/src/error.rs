use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: {left:?} vs {right:?}")]
    Dimension {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("non-finite value at step {step}: {what}")]
    NonFinite { step: usize, what: String },

    #[error("degenerate density: {0}")]
    DegenerateDensity(String),

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("unknown condition id {0}")]
    UnknownCondition(usize),

    #[error("parse error at record {record}: {message}")]
    Parse { record: usize, message: String },

    #[error("incompatible checkpoint: found version {found}, expected {expected}")]
    Incompatible { found: u32, expected: u32 },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn dim(op: &'static str, left: &[usize], right: &[usize]) -> Self {
        Error::Dimension {
            op,
            left: left.to_vec(),
            right: right.to_vec(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_)
            | Error::Parse { .. }
            | Error::Incompatible { .. }
            | Error::UnknownCondition(_)
            | Error::Dimension { .. }
            | Error::Contract(_) => 2,
            Error::Numeric(_)
            | Error::NonFinite { .. }
            | Error::DegenerateDensity(_)
            | Error::DegenerateInput(_) => 3,
            Error::Io { .. } => 4,
        }
    }
}
