use thiserror::Error;

/// Errors reported by the solver, controller and optimiser.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum GksError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid time step: {0}")]
    InvalidTimeStep(String),

    #[error("non-finite input: {0}")]
    NonFinite(String),

    #[error("solution blew up at t = {time} (max |coefficient| = {magnitude:e})")]
    BlowUp { time: f64, magnitude: f64 },

    #[error("Newton iteration did not converge after {iterations} iterations (residual {residual:e})")]
    NewtonFailed { iterations: usize, residual: f64 },

    #[error("singular Jacobian (condition estimate {condition:e})")]
    SingularJacobian { condition: f64 },

    #[error("actuator matrix is ill-conditioned (condition number {condition:e})")]
    IllConditioned { condition: f64 },

    #[error("actuator matrix is rank deficient: {0}")]
    RankDeficient(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("eigenvalue iteration did not converge for a {0}x{0} matrix")]
    EigenFailed(usize),
}

pub type Result<T> = std::result::Result<T, GksError>;
