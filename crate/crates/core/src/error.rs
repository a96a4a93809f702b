use thiserror::Error;

/// Errors raised by the numerical core and the experiment driver.
#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not square: {0}x{1}")]
    NotSquare(usize, usize),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("matrix is not Hermitian (max |M - M^dagger| = {0:e})")]
    NotHermitian(f64),

    #[error("operator is not positive semidefinite (min eigenvalue {0:e})")]
    NotPsd(f64),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("unknown channel `{0}`")]
    UnknownChannel(String),

    #[error("memory budget exceeded: {what} needs {needed} entries, cap is {cap}")]
    BudgetExceeded {
        what: String,
        needed: u128,
        cap: u128,
    },

    #[error("typical subspace of system {0} is empty")]
    EmptyTypicalSet(&'static str),

    #[error("code is empty or has fewer than the required codewords ({0})")]
    EmptyCode(usize),

    #[error("decoder needs dim B >= N: have {have}, need {need}")]
    DimensionShortfall { have: usize, need: usize },

    #[error("inconsistent inputs: {0}")]
    Inconsistent(String),

    #[error("config error in field `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("check failed: {message}")]
    CheckFailed {
        message: String,
        /// Serialized instance for replay.
        dump: Box<serde_json::Value>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
