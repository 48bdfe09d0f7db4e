use std::path::PathBuf;

/// Errors raised anywhere in the pipeline.
///
/// The variants are grouped so callers can tell misuse (`Shape`, `Contract`,
/// `Build`, `Parse`, `State`) apart from numerical trouble (`NonFinite`) and
/// plain IO failures.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch in `{op}`: {detail}")]
    Shape { op: &'static str, detail: String },

    #[error("non-finite value produced by `{op}` (tape value #{index})")]
    NonFinite { op: &'static str, index: usize },

    #[error("numeric fault at node `{node}`: {detail}")]
    NumericFault { node: String, detail: String },

    #[error("invalid state: {0}")]
    State(String),

    #[error("contract violated: {0}")]
    Contract(String),

    #[error("graph build error: {0}")]
    Build(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True when the error stems from a non-finite value rather than misuse.
    pub fn is_numeric(&self) -> bool {
        matches!(self, Error::NonFinite { .. } | Error::NumericFault { .. })
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
