use thiserror::Error;

/// Rejection of a single malformed input value.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ValidationError {
    #[error("invalid address {input:?}: {reason}")]
    Address { input: String, reason: String },
    #[error("invalid 32-byte value {input:?}: {reason}")]
    Word { input: String, reason: String },
    #[error("invalid hex {input:?}: {reason}")]
    Hex { input: String, reason: String },
    #[error("missing field `{0}`")]
    MissingField(&'static str),
    #[error("invalid field `{field}`: {reason}")]
    Field { field: &'static str, reason: String },
}
