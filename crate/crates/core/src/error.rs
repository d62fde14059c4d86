use thiserror::Error;

/// Errors raised by the engine.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("Feller condition violated: kappa*theta - xi^2/2 = {gap:.6e} < 0")]
    FellerViolation { gap: f64 },

    #[error("invalid localization: {0}")]
    InvalidNesting(String),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("Newton iteration did not converge at time step {step} (residual {residual:.3e})")]
    NewtonDivergence { step: usize, residual: f64 },

    #[error("negative radicand {value:.3e} in insurance rate at node (t={time_index}, x={space_index})")]
    RadicandNegative {
        time_index: usize,
        space_index: usize,
        value: f64,
    },

    #[error("moment-bound window violated: {0}")]
    WindowViolation(String),

    #[error("simulation scheme does not match model: {0}")]
    SchemeMismatch(String),

    #[error("degenerate sample: {0}")]
    DegenerateSample(String),
}

pub type Result<T> = std::result::Result<T, Error>;
