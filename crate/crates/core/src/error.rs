use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error("{context}: {source}")]
    Json {
        context: String,
        #[source]
        source: serde_json::Error,
    },

    #[error("{path}: missing column `{column}`")]
    MissingColumn { path: PathBuf, column: String },

    #[error("{path}: no usable rows")]
    NoUsableRows { path: PathBuf },

    #[error("{path}: line {line}: {message}")]
    BadRow {
        path: PathBuf,
        line: u64,
        message: String,
    },

    #[error("unknown item `{0}`")]
    UnknownItem(String),

    #[error("unknown knowledge point `{0}`")]
    UnknownKnowledge(String),

    #[error("unknown student `{0}`")]
    UnknownStudent(String),

    #[error("item `{0}` has no knowledge points")]
    EmptyKnowledgeRow(String),

    #[error("test fraction must lie in (0, 1), got {0}")]
    InvalidFraction(f64),

    #[error("{kind} index {index} out of range (len {len})")]
    IndexOutOfRange {
        kind: &'static str,
        index: usize,
        len: usize,
    },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("non-finite loss at epoch {epoch}, batch {batch}; lower the learning rate")]
    NonFiniteLoss { epoch: usize, batch: usize },

    #[error("item {0} is already selected")]
    AlreadySelected(usize),

    #[error("item {0} is not in the candidate pool")]
    NotACandidate(usize),

    #[error("selection budget exhausted")]
    BudgetExhausted,

    #[error("no unselected candidates left")]
    EmptyPool,

    #[error("no recommended item text for item {0}")]
    MissingItemText(usize),

    #[error("no name for knowledge point {0}")]
    MissingKnowledgeName(usize),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

/// Coarse classification used by front ends to pick exit codes and status
/// classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Usage,
    Data,
    Numeric,
    Protocol,
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::InvalidFraction(_) | Error::InvalidConfig(_) => ErrorKind::Usage,
            Error::NonFiniteLoss { .. } => ErrorKind::Numeric,
            Error::AlreadySelected(_)
            | Error::NotACandidate(_)
            | Error::BudgetExhausted
            | Error::EmptyPool => ErrorKind::Protocol,
            _ => ErrorKind::Data,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn csv(path: impl Into<PathBuf>, source: csv::Error) -> Self {
        Error::Csv {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn json(context: impl Into<String>, source: serde_json::Error) -> Self {
        Error::Json {
            context: context.into(),
            source,
        }
    }
}
