use thiserror::Error;

/// Errors produced by the grnlfa pipeline.
#[derive(Error, Debug)]
pub enum Error {
    /// One or more malformed input records, each tagged with its line number.
    #[error("parse error:\n{}", .0.join("\n"))]
    Parse(Vec<String>),

    /// Invalid configuration; all violations are collected before reporting.
    #[error("invalid configuration:\n{}", .0.join("\n"))]
    Config(Vec<String>),

    #[error("split: {0}")]
    Split(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("index out of range: {0}")]
    IndexOutOfRange(String),

    #[error("empty known-entry set: {0}")]
    EmptySet(String),

    #[error("unknown model: {0}")]
    UnknownModel(String),

    /// Malformed canonical network or factor file.
    #[error("malformed file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Single-issue configuration error.
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(vec![msg.into()])
    }
}

pub type Result<T> = std::result::Result<T, Error>;
