use std::io;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("matrix is not in Sym_beta(N): {0}")]
    NotHermitian(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("model specification failed validation: {0}")]
    InvalidSpec(String),

    #[error("cross-correlation {rho} at ({a},{b}) cannot be realized by the shifted-Bernoulli mixture")]
    UnrealizableCorrelation { a: usize, b: usize, rho: f64 },

    #[error("imaginary basis matrix requested for a real symmetric model")]
    ImagBasisInRealClass,

    #[error("Dyson equation did not converge after {iterations} iterations (residual {residual:.3e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("solution violates Im z * Im M > 0 (smallest eigenvalue {0:.3e})")]
    WrongBranch(f64),

    #[error("degenerate 2x2 covariance at ({a},{b}): det = {det:.3e}")]
    DegenerateCovariance { a: usize, b: usize, det: f64 },

    #[error("flow time {t} outside the admissible range [0, alpha = {alpha}]")]
    TimeCapExceeded { t: f64, alpha: f64 },

    #[error("Euler-Maruyama step {dt} exceeds the stability radius {limit}")]
    StepSizeUnstable { dt: f64, limit: f64 },

    #[error("energy {energy} is outside the kappa-bulk (rho = {rho}, kappa = {kappa})")]
    NotInBulk { energy: f64, rho: f64, kappa: f64 },

    #[error("standard error {stderr:.3e} exceeds requested tolerance {tolerance:.3e}")]
    InsufficientSamples { stderr: f64, tolerance: f64 },

    #[error("eigensolver failed: {0}")]
    Eigensolver(String),

    #[error("config hash mismatch: record has {recorded}, config hashes to {actual}")]
    HashMismatch { recorded: String, actual: String },

    #[error("resource guard: {0} (pass --allow-large to override)")]
    ResourceGuard(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
