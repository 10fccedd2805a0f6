use thiserror::Error;

/// Errors raised across the simulator.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("inconsistent data: {0}")]
    Consistency(String),

    #[error("peak power violated for wd {wd}, class {class}: |P|^2 = {power:e} > {peak:e}")]
    PowerViolation {
        wd: usize,
        class: usize,
        power: f64,
        peak: f64,
    },

    #[error("degenerate knowledge statistics for wd {wd}, class {class} (std {std:e})")]
    DegenerateKnowledge { wd: usize, class: usize, std: f64 },

    #[error("degenerate plan: {0}")]
    PlanDegeneracy(String),

    #[error("sdp solver did not converge after {iterations} iterations (residual {residual:e})")]
    Convergence {
        iterations: usize,
        residual: f64,
        best: Option<Box<crate::sdp::SdpSolution>>,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
