use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("bit width {0} is outside 1..=64")]
    InvalidBitWidth(u32),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    /// The fidelity budget cannot be met (e.g. a nonpositive MSE budget).
    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("{operation} does not support {noise} noise")]
    UnsupportedNoise {
        operation: &'static str,
        noise: &'static str,
    },

    #[error("{what} did not converge (residual {residual:e})")]
    NonConvergence { what: &'static str, residual: f64 },

    #[error("enumeration needs {required:.3e} points, budget is {budget:.3e}")]
    BudgetExceeded { required: f64, budget: f64 },

    #[error("greedy loop exceeded {0} iterations")]
    IterationCap(u64),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("invalid layout: {0}")]
    InvalidLayout(String),

    #[error("corpus: {0}")]
    Corpus(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}
