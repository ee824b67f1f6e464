use thiserror::Error;

/// Errors raised by the filtering kernels.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum FilterError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("numerical failure: {0}")]
    NumericalFailure(String),
    #[error("matrix is not positive semi-definite (min eigenvalue {min_eigenvalue:e})")]
    NotPositiveSemiDefinite { min_eigenvalue: f64 },
    #[error("truth simulation diverged at t = {time}")]
    SimulationDiverged { time: f64 },
    #[error("step rejected: {0}")]
    StepRejected(String),
    #[error("requested accuracy not attainable (achieved scaled global error {achieved:e})")]
    AccuracyNotAttainable { achieved: f64 },
    #[error("step budget of {budget} steps exceeded")]
    StepBudgetExceeded { budget: usize },
    #[error("step size underflow at t = {time}")]
    StepSizeUnderflow { time: f64 },
    #[error("singular mid-point system at t = {time}")]
    SingularMidpointSystem { time: f64 },
    #[error("filter diverged: {0}")]
    FilterDivergence(String),
}

pub type Result<T> = std::result::Result<T, FilterError>;
