use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// Exact computation would exceed the configured work budget.
    #[error("{what}: size {size} exceeds cap {cap}; use the Poisson approximation instead")]
    CapExceeded { what: &'static str, size: u128, cap: u128 },

    #[error("transition row for state {state} has tail mass {tail_mass:e} above the allowed {limit:e}")]
    ExcessTailMass { state: usize, tail_mass: f64, limit: f64 },

    #[error("power iteration did not converge after {iterations} iterations (residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },

    #[error("inconclusive at state {state}: truncated mass {pollution:e} exceeds observed slack {slack:e}")]
    Inconclusive { state: usize, pollution: f64, slack: f64 },

    #[error("malformed input: {0}")]
    Parse(String),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Short stable tag for machine-readable error prefixes.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidParameter(_) => "invalid-parameter",
            Error::CapExceeded { .. } => "cap-exceeded",
            Error::ExcessTailMass { .. } => "excess-tail-mass",
            Error::NotConverged { .. } => "not-converged",
            Error::Inconclusive { .. } => "inconclusive",
            Error::Parse(_) => "parse",
            Error::Csv(_) => "csv",
            Error::Json(_) => "json",
            Error::Io(_) => "io",
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
