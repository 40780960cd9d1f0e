use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {reason}: {text:?}")]
    Parse {
        line: usize,
        text: String,
        reason: String,
    },

    #[error("rating {rating} (user {user}, item {item}, ts {timestamp}) outside scale [{min}, {max}]")]
    RatingOutOfScale {
        user: u64,
        item: u64,
        rating: f64,
        timestamp: u64,
        min: f64,
        max: f64,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("non-finite value during {context}")]
    NonFinite { context: String },

    #[error("no admissible item: {0}")]
    NoCandidates(String),

    #[error("model file missing: {}", .0.display())]
    MissingModel(PathBuf),

    #[error("corrupt or incompatible file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code: 1 usage/config, 2 data, 3 numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidArgument(_) | Error::Config(_) | Error::NoCandidates(_) => 1,
            Error::Parse { .. }
            | Error::RatingOutOfScale { .. }
            | Error::MissingModel(_)
            | Error::Format(_)
            | Error::Io(_) => 2,
            Error::NonFinite { .. } => 3,
        }
    }
}
