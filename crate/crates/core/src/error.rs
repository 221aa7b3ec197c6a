use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: String,
        expected: usize,
        found: usize,
    },

    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("{context}: matrix not positive definite (min eigenvalue {min_eigenvalue:e})")]
    NotPositiveDefinite { context: String, min_eigenvalue: f64 },

    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    #[error("eliminated block is not negative definite (margin {margin:e})")]
    BlockNotNegativeDefinite { margin: f64 },

    #[error("degenerate network: {0}")]
    DegenerateNetwork(String),

    #[error("LMI infeasible: {0}")]
    Infeasible(String),

    #[error("certificate rejected: {0}")]
    CertificateRejected(String),

    #[error("lifted solution rejected: subsystem {subsystem} has Riccati margin {margin:e}")]
    LiftRejected { subsystem: usize, margin: f64 },

    #[error("initial synchronization errors are required for the total bound")]
    MissingInitialState,

    #[error("unsupported coupling operator: {0}")]
    UnsupportedOperator(String),

    #[error("numerical blow-up at t = {time}")]
    NumericalBlowup { time: f64 },

    #[error("invalid input: {0}")]
    InvalidInput(String),
}

impl Error {
    pub(crate) fn dimension(context: &str, expected: usize, found: usize) -> Self {
        Self::DimensionMismatch {
            context: context.to_owned(),
            expected,
            found,
        }
    }
}
