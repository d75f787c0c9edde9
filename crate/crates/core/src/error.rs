use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at row {row}, column {col}: {msg}")]
    Parse { row: usize, col: usize, msg: String },

    #[error("labeling error: {0}")]
    Label(String),

    #[error("shape error: {0}")]
    Shape(String),

    #[error("not found: {0}")]
    NotFound(String),

    #[error("size error: {0}")]
    Size(String),

    #[error("degenerate scale: {0}")]
    DegenerateScale(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("sample size error: {0}")]
    SampleSize(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("capability error: {0}")]
    Capability(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for errors raised because a request exceeds what the toolkit
    /// can do (table limits, enumeration limits), as opposed to bad data.
    pub fn is_capability(&self) -> bool {
        matches!(self, Error::Capability(_) | Error::Unsupported(_))
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}
