use std::io;
use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Broad classification used to pick a process exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    /// Bad configuration, arguments or violated contracts (exit status 2).
    Validation,
    /// Malformed or inconsistent input data (exit status 3).
    Data,
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },

    #[error("line {line} (byte offset {offset}): {message}")]
    Malformed {
        line: usize,
        offset: u64,
        message: String,
    },

    #[error("duplicate issue id {id} on lines {first_line} and {second_line}")]
    DuplicateId {
        id: u64,
        first_line: usize,
        second_line: usize,
    },

    #[error("record {id}: vector has {found} components, expected {expected}")]
    Dimension { id: u64, expected: usize, found: usize },

    #[error("record {id}: {source}")]
    Record { id: u64, source: Box<Error> },

    #[error("{0}")]
    Invalid(String),

    #[error("{0}")]
    Data(String),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }

    pub fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Attach the id of the record being processed.
    pub fn for_record(self, id: u64) -> Self {
        match self {
            e @ Error::Record { .. } => e,
            e => Error::Record {
                id,
                source: Box::new(e),
            },
        }
    }

    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Invalid(_) => ErrorKind::Validation,
            Error::Record { source, .. } => source.kind(),
            _ => ErrorKind::Data,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self.kind() {
            ErrorKind::Validation => 2,
            ErrorKind::Data => 3,
        }
    }
}
