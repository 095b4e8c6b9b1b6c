use thiserror::Error;

/// Errors produced anywhere in the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    /// Two operands with incompatible shapes.
    #[error("{op}: incompatible shapes {lhs_rows}x{lhs_cols} and {rhs_rows}x{rhs_cols}")]
    Shape {
        op: &'static str,
        lhs_rows: usize,
        lhs_cols: usize,
        rhs_rows: usize,
        rhs_cols: usize,
    },

    /// An index (node id, edge endpoint, label id, ...) outside its bound.
    #[error("{op}: index {index} out of range for bound {bound}")]
    Index {
        op: &'static str,
        index: usize,
        bound: usize,
    },

    /// A malformed row in a dataset file.
    #[error("{path}:{line}: {msg}")]
    Data {
        path: String,
        line: usize,
        msg: String,
    },

    /// A dataset-level problem not tied to a single line.
    #[error("{path}: {msg}")]
    Dataset { path: String, msg: String },

    /// A caller violated an operation's precondition.
    #[error("{0}")]
    Contract(String),

    /// Non-finite values or other numeric failures.
    #[error("{0}")]
    Numeric(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub fn numeric(msg: impl Into<String>) -> Self {
        Error::Numeric(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
