use thiserror::Error;

/// Errors raised by the ordeal-core routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("point ({a}, {b}) lies outside the unit square")]
    Domain { a: f64, b: f64 },

    #[error("density {value:.3e} at ({a}, {b}) is below the floor; anti-hazard rate undefined")]
    DensityFloor { a: f64, b: f64, value: f64 },

    #[error("invalid {field}: {reason}")]
    InvalidArgument { field: &'static str, reason: String },

    #[error("menu must contain at least one option")]
    EmptyMenu,

    #[error("invalid boundary: {0}")]
    InvalidBoundary(String),

    #[error("infeasible pair: {0}")]
    Infeasible(String),

    #[error("degenerate mechanism: {0}")]
    Degenerate(String),

    #[error("{what} did not converge after {iterations} iterations (residual {residual:.3e})")]
    NonConvergence {
        what: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("slope {slope} admits no supply-preserving line")]
    InfeasibleSlope { slope: f64 },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn invalid(field: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidArgument {
            field,
            reason: reason.into(),
        }
    }

    /// True for solver failures, as opposed to bad inputs.
    pub fn is_convergence_failure(&self) -> bool {
        matches!(self, Error::NonConvergence { .. })
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
