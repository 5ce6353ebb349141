use thiserror::Error;

/// Errors shared by every module. The CLI maps variants onto exit codes.
#[derive(Debug, Error)]
pub enum Error {
    /// A numeric argument lies outside its admissible range.
    #[error("domain error: {0}")]
    Domain(String),
    /// Malformed structure: unknown axis, wrong sizes, bad JSON shape.
    #[error("schema error: {0}")]
    Schema(String),
    /// A documented precondition of an operation does not hold.
    #[error("precondition failed: {0}")]
    Precondition(String),
    /// An enumeration would exceed its configured cap.
    #[error("size cap exceeded: {0}")]
    Cap(String),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}

pub(crate) fn schema<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Schema(msg.into()))
}

pub(crate) fn precondition<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Precondition(msg.into()))
}
