use thiserror::Error;

use crate::solver::SolveReport;

#[derive(Debug, Error, Clone)]
pub enum Error {
    #[error("velocity norm {speed} is not below 1")]
    LuminalVelocity { speed: f64 },

    #[error("parameter {t} outside trajectory span [{lo}, {hi}]")]
    OutOfRange { t: f64, lo: f64, hi: f64 },

    #[error("perturbation does not vanish at an endpoint (|b| = {value:e})")]
    EndpointViolation { value: f64 },

    #[error("perturbation layout does not match the trajectory: {0}")]
    LayoutMismatch(String),

    #[error("no lightcone root inside the partner span for event time {t_event}")]
    RootNotBracketed { t_event: f64 },

    #[error("near-luminal jacobian {jacobian:e} (threshold {threshold:e})")]
    NearLuminalJacobian { jacobian: f64, threshold: f64 },

    #[error("direction field is {value:e} at an interval endpoint")]
    EndpointPerturbed { value: f64 },

    #[error("invalid boundary data: {0}")]
    InvalidEhbc(String),

    #[error("superluminal orbit (subluminal margin {margin:e})")]
    SuperluminalOrbit { margin: f64 },

    #[error("non-integer exponent {p} applied to a negative velocity square")]
    NonIntegerPowerOfNegative { p: f64 },

    #[error("{context}: no convergence after {iterations} iterations (residual {residual:e})")]
    NoConvergence {
        context: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("solver did not converge: {} iterations, gradient norm {:e}", .0.iterations, .0.final_gradient_norm)]
    SolverNoConvergence(Box<SolveReport>),

    #[error("arc {arc} too short for the lightcone cuts (need > {min})")]
    ArcTooShort { arc: f64, min: f64 },

    #[error("sewing chain left the admissible spans at t = {t}")]
    ChainEscaped { t: f64 },

    #[error("solver step left the subluminal class (margin {margin:e})")]
    SuperluminalStep { margin: f64 },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("i/o: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
