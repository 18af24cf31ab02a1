use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Operand extents do not line up.
    #[error("dimension error: {0}")]
    Dimension(String),

    /// A caller broke an operation precondition (bad axis, even window, ...).
    #[error("contract error: {0}")]
    Contract(String),

    /// Every logit of a softmax slice sits at the masking sentinel.
    #[error("degenerate softmax slice {slice}: every entry is masked")]
    DegenerateSlice { slice: usize },

    #[error("empty selection: {0}")]
    EmptySelection(String),

    #[error("degenerate reference: {0}")]
    DegenerateReference(String),

    /// One or more configuration problems, reported together.
    #[error("configuration error:\n  {}", .0.join("\n  "))]
    Config(Vec<String>),

    #[error("format error at byte {offset}: {message}")]
    Format { offset: u64, message: String },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl Error {
    pub(crate) fn dim(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }

    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(vec![msg.into()])
    }

    pub(crate) fn format(offset: u64, msg: impl Into<String>) -> Self {
        Error::Format {
            offset,
            message: msg.into(),
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
            Error::Config(_) => 2,
            Error::Format { .. } | Error::Io { .. } | Error::EmptySelection(_) | Error::DegenerateReference(_) => 3,
            Error::Numerical(_) | Error::DegenerateSlice { .. } => 4,
            Error::Dimension(_) | Error::Contract(_) => 3,
        }
    }
}
