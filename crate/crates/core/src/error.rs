use std::io;

use crate::library_index::BlockKey;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error("I/O error reading block {key}: {source}")]
    BlockIo { key: BlockKey, source: io::Error },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("encoding error: {0}")]
    Encoding(String),

    #[error("hypervector dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("index build error: {0}")]
    Build(String),

    #[error("malformed index file: {0}")]
    Format(String),

    #[error("unsupported index format version {found} (this build reads version {supported})")]
    Version { found: u32, supported: u32 },

    #[error("incompatible with index: {0}")]
    Incompatible(String),
}

impl Error {
    pub(crate) fn parse(line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            line,
            msg: msg.into(),
        }
    }
}
