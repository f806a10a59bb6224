use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("value {value} does not fit in {bits} signed bits")]
    OutOfRange { value: i64, bits: u8 },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("crossbar capacity exceeded: {0}")]
    CapacityExceeded(String),

    #[error("embedding id {0} has no bank assignment")]
    UnplacedId(u64),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid design point: {0}")]
    InvalidPoint(String),

    #[error("search aborted: {0}")]
    SearchAborted(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
