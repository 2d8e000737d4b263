use thiserror::Error;

/// Errors raised by grid construction, solvers and diagnostics.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("resolution {got} is below the minimum of {min}")]
    ResolutionTooCoarse { got: usize, min: usize },

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error("weight exponent mismatch: grid has a = {grid}, params have a = {params}")]
    ExponentMismatch { grid: f64, params: f64 },

    #[error("linear solve stalled: relative residual {residual:.3e} after {iterations} iterations")]
    LinearSolve { iterations: usize, residual: f64 },

    #[error("sign pattern did not stabilize after {iterations} outer iterations ({} oscillating thin nodes)", oscillating.len())]
    NotStabilized {
        iterations: usize,
        oscillating: Vec<usize>,
    },

    #[error("outside the domain: {0}")]
    OutsideDomain(String),

    #[error("quadrature did not reach tolerance: {0}")]
    Quadrature(String),

    #[error("flux calibration inconsistent: Richardson estimates {first} and {second} differ by more than 5%")]
    Calibration { first: f64, second: f64 },

    #[error("not applicable: {0}")]
    NotApplicable(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("certificate disagreement: closed form {closed_form:.12e} vs quadrature {quadrature:.12e}")]
    Disagreement { closed_form: f64, quadrature: f64 },

    #[error("comparison violated: u_i exceeds u_2 by {excess:.3e} at node {node}")]
    DominationViolated { excess: f64, node: usize },

    #[error("solution collapsed to the zero field (resolution too coarse?)")]
    Collapse,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
