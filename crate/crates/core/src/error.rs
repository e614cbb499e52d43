use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A numeric argument outside the mathematical domain of an operation.
    #[error("{what} out of domain: {value}")]
    Domain { what: &'static str, value: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// Decoy intensities that make a closed-form bound singular.
    #[error("degenerate decoy setting: {0}")]
    DegenerateDecoy(String),

    /// Parameter estimation could not produce a usable bound; the key rate is zero.
    #[error("estimation failure: {0}")]
    EstimationFailure(String),

    #[error("yield constraints are infeasible: {constraint} cannot be satisfied")]
    Infeasible { constraint: String },

    #[error("missing input: {0}")]
    MissingInput(String),

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: u64,
        column: u64,
        message: String,
    },

    #[error("value out of range in field `{field}` (line {line}): {value}")]
    Range { field: String, value: f64, line: u64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
