//! Crate-wide error type.

use thiserror::Error;

/// All failure modes surfaced by the library.
#[derive(Debug, Error)]
pub enum Error {
    /// Tensor dimensions incompatible for the requested operation.
    #[error("shape mismatch in {op}: left is {lhs_rows}x{lhs_cols}, right is {rhs_rows}x{rhs_cols}")]
    Shape {
        op: &'static str,
        lhs_rows: usize,
        lhs_cols: usize,
        rhs_rows: usize,
        rhs_cols: usize,
    },

    /// Invalid numeric parameter (e.g. non-positive epsilon).
    #[error("invalid parameter: {0}")]
    Param(String),

    /// Index outside the valid range (token ids, rows).
    #[error("index {index} out of range (limit {limit})")]
    Index { index: usize, limit: usize },

    /// Input text contains a symbol missing from the vocabulary.
    #[error("cannot tokenize {symbol:?} at offset {offset}: not in vocabulary")]
    Tokenize { symbol: char, offset: usize },

    /// Sequence exceeds the model's maximum length.
    #[error("sequence length {needed} exceeds capacity {max_seq}")]
    Capacity { needed: usize, max_seq: usize },

    /// API misuse (empty corpus, foreign tape value, zero steps, ...).
    #[error("usage error: {0}")]
    Usage(String),

    /// Optimization produced a non-finite loss or gradient.
    #[error("divergence at epoch {epoch}: non-finite {what} (learning rate too high?)")]
    Divergence { epoch: usize, what: &'static str },

    /// Stored checksum does not match the file contents.
    #[error("integrity error: {0}")]
    Integrity(String),

    /// File format version not supported by this build.
    #[error("unsupported format version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },

    /// Artifact does not belong to the supplied checkpoint.
    #[error("compatibility error: {0}")]
    Compatibility(String),

    /// Malformed file contents (bad magic, truncation, bad record).
    #[error("parse error: {0}")]
    Parse(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
