use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Error {
    #[error("parse error: {0}")]
    Parse(String),
    #[error("sort mismatch: value {value} is not of sort {sort}")]
    SortMismatch { value: String, sort: String },
    #[error("pattern function: {0}")]
    Pattern(String),
    #[error("not a permutation: {0}")]
    Perm(String),
    #[error("invalid machine: {0}")]
    Invalid(String),
    #[error("kind mismatch: {0}")]
    KindMismatch(String),
    #[error("run does not accept")]
    NotAccepting,
    #[error("profiles belong to different machines")]
    MachineMismatch,
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("not length preserving: {0}")]
    NotLengthPreserving(String),
    #[error("length mismatch: {0}")]
    LengthMismatch(String),
    #[error("type error at {path}: {msg}")]
    Type { path: String, msg: String },
    #[error("atom {0} has no deatomisation")]
    MissingAtom(String),
    #[error("{0}")]
    Format(String),
}

impl Error {
    pub(crate) fn mismatch(value: impl ToString, sort: impl ToString) -> Self {
        Error::SortMismatch {
            value: value.to_string(),
            sort: sort.to_string(),
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Format(e.to_string())
    }
}
