use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("index {index} out of range 0..{bound}")]
    IndexOutOfRange { index: usize, bound: usize },

    #[error("rank policy {policy} is not available over the {ring} ring")]
    PolicyMismatch { policy: String, ring: String },

    #[error("extension length {lambda} exceeds the materialization bound {bound}")]
    MaterializationBound { lambda: String, bound: usize },

    #[error("memory budget exceeded: need {needed} bytes, budget {budget} bytes")]
    MemoryBudget { needed: u128, budget: u64 },

    #[error("index enumeration of {count} entries exceeds the bound {bound}")]
    EnumerationBound { count: String, bound: u64 },

    #[error("degenerate channel realization: {0}")]
    Degenerate(String),

    #[error("invariant violated: {0}")]
    InvariantViolation(String),

    #[error("slope fit needs at least 3 points spanning 20 dB: {0}")]
    InsufficientPoints(String),
}

impl Error {
    /// Process exit code for the command line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidParams(_)
            | Error::IndexOutOfRange { .. }
            | Error::PolicyMismatch { .. }
            | Error::InsufficientPoints(_)
            | Error::DimensionMismatch(..) => 2,
            Error::MaterializationBound { .. }
            | Error::MemoryBudget { .. }
            | Error::EnumerationBound { .. } => 3,
            Error::Degenerate(_) | Error::InvariantViolation(_) => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
