use thiserror::Error;

/// Errors raised by model construction, numerical kernels and the verification battery.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("domain violation: {0}")]
    DomainViolation(String),

    #[error("root finding did not converge after {iterations} iterations (target {target})")]
    NoConvergence { iterations: usize, target: f64 },

    #[error("quadrature on [{lower}, {upper}] failed: error estimate {error:e} after {evaluations} evaluations")]
    QuadratureFailure {
        lower: f64,
        upper: f64,
        error: f64,
        evaluations: usize,
    },

    #[error("assumption violated: {0}")]
    AssumptionViolation(String),

    #[error("value {value} is outside the image of the pricing map at t = {t}")]
    OutOfRange { t: f64, value: f64 },

    #[error("density underflow at t = {t}: log-density {log_density}")]
    DensityUnderflow { t: f64, log_density: f64 },

    #[error("insufficient paths: need at least {needed}, have {have}")]
    InsufficientPaths { needed: usize, have: usize },

    #[error("inconsistent path bundle: {0}")]
    InconsistentBundle(String),

    #[error("grid cannot resolve terminal cutoff: {0}")]
    StepResolution(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
