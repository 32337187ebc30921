//! Error types shared across the middleware layers.

use thiserror::Error;

/// Errors surfaced by the publish-subscribe middleware.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DcpsError {
    /// The transport endpoint for the requested domain could not be opened.
    #[error("domain unavailable: {0}")]
    DomainUnavailable(String),
    /// The entity (or one of its ancestors) has been deleted.
    #[error("entity deleted")]
    EntityDeleted,
    /// A stated precondition does not hold.
    #[error("precondition violated: {0}")]
    Precondition(String),
    /// A resource bound was hit: history full of unacknowledged samples,
    /// or a sample exceeding the maximum message size.
    #[error("resource limit: {0}")]
    ResourceLimit(String),
    /// Filter text could not be parsed; offset is in bytes.
    #[error("parse error at byte {offset}: {message}")]
    ParseError { offset: usize, message: String },
    /// Filter parsed but references a field/operator pair the topic's type
    /// does not support.
    #[error("type error on field `{field}` with operator `{op}`: {message}")]
    TypeError {
        field: String,
        op: String,
        message: String,
    },
    /// Sample values do not conform to the topic's type descriptor.
    #[error("type mismatch: {0}")]
    TypeMismatch(String),
    /// Blocking call back into the API from a listener callback.
    #[error("reentrant call from listener callback")]
    Reentrancy,
}

impl DcpsError {
    pub fn precondition(msg: impl Into<String>) -> Self {
        DcpsError::Precondition(msg.into())
    }

    pub fn resource(msg: impl Into<String>) -> Self {
        DcpsError::ResourceLimit(msg.into())
    }
}

/// Errors produced when encoding or decoding wire messages.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum WireError {
    /// Bad magic, bad version, truncated submessage, or invalid UTF-8.
    #[error("malformed message: {0}")]
    Malformed(String),
    /// Encoded message would exceed the maximum datagram size.
    #[error("message too large: {0} bytes")]
    TooLarge(usize),
}

impl WireError {
    pub fn malformed(msg: impl Into<String>) -> Self {
        WireError::Malformed(msg.into())
    }
}
