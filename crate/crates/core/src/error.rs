use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{what} did not converge after {iterations} iterations (best estimate {best_estimate:e}, residual {residual:e})")]
    NonConvergence {
        what: &'static str,
        iterations: usize,
        best_estimate: f64,
        residual: f64,
    },

    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: String,
        expected: usize,
        found: usize,
    },

    #[error("dense path limited to {limit} total dimensions, operator has {dim}; use the iterative path")]
    DenseLimitExceeded { dim: usize, limit: usize },

    #[error(
        "inner block system is singular or ill-conditioned (condition estimate {condition:e}); \
         step size tau = {tau} must satisfy tau < 1/||A - V|| = {tau_bound}"
    )]
    IllConditioned { condition: f64, tau: f64, tau_bound: f64 },

    #[error("step-size bound violated: {0}")]
    StepBound(String),

    #[error(
        "no unique fixed point certified: gamma_G * gamma_F* = {product} must exceed ||A - V||^2 / 4 = {threshold}"
    )]
    NoFixedPoint { product: f64, threshold: f64 },

    #[error("no positive rate certificate (eta = {eta:e}, sigma = {sigma:e})")]
    NoRateCertificate { eta: f64, sigma: f64 },

    #[error("singular system: {0}")]
    Singular(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
