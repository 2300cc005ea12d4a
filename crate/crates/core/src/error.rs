use thiserror::Error;

/// Errors raised by estimation, enumeration and data handling.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("malformed input: {0}")]
    Malformed(String),

    #[error("item `{item}` has {found} responses but the dataset uses {expected} per item")]
    InconsistentTotal {
        item: String,
        expected: u32,
        found: u32,
    },

    #[error("rating {rating} for item `{item}` is outside 1..={ratings}")]
    RatingOutOfRange {
        item: String,
        rating: usize,
        ratings: usize,
    },

    #[error("dimension mismatch: expected {expected} ratings, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("{what} needs {count} but the cap is {cap}")]
    CapExceeded {
        what: String,
        count: u128,
        cap: u128,
    },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid confusion matrix: {0}")]
    InvalidMatrix(String),

    #[error("item `{item}` has {have} raw responses, {need} requested")]
    InsufficientResponses {
        item: String,
        have: usize,
        need: usize,
    },

    #[error("mapping does not cover the dataset: {0}")]
    MappingMismatch(String),
}

pub type Result<T> = std::result::Result<T, Error>;
