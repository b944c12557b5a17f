use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("text to encode is empty")]
    EmptyText,
    #[error("encoder kind `{0}` cannot encode text")]
    UnsupportedKind(String),
    #[error("external encoder unavailable: {0}")]
    ExternalEncoderUnavailable(String),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("vector has zero norm")]
    ZeroVector,
    #[error("vector contains non-finite values")]
    NonFinite,
    #[error("collection is empty")]
    EmptyCollection,
    #[error("corrupt snapshot: {0}")]
    CorruptSnapshot(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid task spec: {0}")]
    InvalidSpec(String),
    #[error("need at least 2 responses, got {0}")]
    TooFewResponses(usize),
    #[error("series too short: need {needed} points, got {got}")]
    SeriesTooShort { needed: usize, got: usize },
    #[error("length {len} exceeds maximum {max}")]
    LengthExceedsMax { len: usize, max: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
