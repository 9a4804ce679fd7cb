use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: {left:?} vs {right:?}")]
    Dimension {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    #[error("domain error in {op}: {detail}")]
    Domain { op: &'static str, detail: String },
    #[error("{op} requires non-empty input")]
    EmptyInput { op: &'static str },
    #[error("contract violated: {0}")]
    Contract(String),
    #[error("non-finite value produced by {op}")]
    NonFinite { op: &'static str },
    #[error("configuration error: {0}")]
    Config(String),
    #[error("rank deficient: expected rank {expected}, found {found}")]
    Rank { expected: usize, found: usize },
    #[error("format error: {0}")]
    Format(String),
    #[error("internal error: {0}")]
    Internal(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn dim(op: &'static str, left: &[usize], right: &[usize]) -> Self {
        Error::Dimension {
            op,
            left: left.to_vec(),
            right: right.to_vec(),
        }
    }
}
