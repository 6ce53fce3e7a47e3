use thiserror::Error;

/// Library-wide error type.
///
/// The variants split along a line the CLI cares about: `Schema`, `Parse`,
/// `Value`, `Consistency`, and `Argument` mean the input (file or config) was
/// bad; `Fit` and `Numeric` mean a computation failed on valid input.
#[derive(Debug, Error)]
pub enum Error {
    /// Input file does not have the expected column layout.
    #[error("schema error: {0}")]
    Schema(String),

    /// A field could not be parsed as the expected type.
    #[error("parse error: {0}")]
    Parse(String),

    /// A parsed value is outside its legal domain (e.g. non-binary treatment).
    #[error("value error: {0}")]
    Value(String),

    /// Within-cluster consistency violated (varying cluster covariate, weight...).
    #[error("consistency error: {0}")]
    Consistency(String),

    /// Caller passed an invalid argument or configuration.
    #[error("argument error: {0}")]
    Argument(String),

    /// A model could not be fit on the given data.
    #[error("fit error: {0}")]
    Fit(String),

    /// A numeric computation is undefined or failed to converge.
    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True when the error describes bad input rather than a failed computation.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::Schema(_)
                | Error::Parse(_)
                | Error::Value(_)
                | Error::Consistency(_)
                | Error::Argument(_)
                | Error::Io(_)
                | Error::Csv(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
