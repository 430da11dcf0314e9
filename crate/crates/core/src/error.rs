use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("graph must have at least one node")]
    EmptyGraph,
    #[error("self-loop at node {0}")]
    SelfLoop(usize),
    #[error("node index {index} out of range for a graph with {n} nodes")]
    IndexOutOfRange { index: usize, n: usize },
    #[error("duplicate edge ({0}, {1})")]
    DuplicateEdge(usize, usize),
    #[error("graph is not connected")]
    NotConnected,
    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),
    #[error("matrix must be square with even dimension, got {rows}x{cols}")]
    NotEvenSquare { rows: usize, cols: usize },
    #[error("gain k[{0}] must be positive")]
    NonPositiveGain(usize),
    #[error("invalid parameter {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
    #[error("dimension mismatch for {what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("eigenvalue iteration did not converge")]
    EigenFailure,
    #[error("gain condition infeasible: lambda_min(R) = {r_min:e}, lambda_min(R_bar) = {rbar_min:e}")]
    AssumptionInfeasible { r_min: f64, rbar_min: f64 },
    #[error("non-finite state at t = {time}")]
    NonFiniteState { time: f64 },
    #[error("disturbance is not constant")]
    NotConstantDisturbance,
    #[error("unknown built-in example {0} (expected 1, 2 or 3)")]
    UnknownExample(u32),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("invalid {field}: {message}")]
    Validation { field: String, message: String },
    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::EigenFailure | Error::NonFiniteState { .. } | Error::AssumptionInfeasible { .. }
        )
    }

    pub fn validation(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Validation {
            field: field.into(),
            message: message.into(),
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
