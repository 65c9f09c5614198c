use thiserror::Error;

/// Errors surfaced by state validation, channel construction and the solver.
#[derive(Debug, Error)]
pub enum QibError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("matrix is not Hermitian (max entry deviation {dev:.3e})")]
    NotHermitian { dev: f64 },
    #[error("invalid state: {0}")]
    InvalidState(String),
    #[error("invalid channel: {0}")]
    InvalidChannel(String),
    #[error("eigenvalue {value:.3e} is materially negative for spectral {func}")]
    NegativeEigenvalue { value: f64, func: &'static str },
    #[error("marginal mismatch: {0}")]
    MarginalMismatch(String),
    #[error("normalizer singular beyond the support of rho_R: {0}")]
    SingularNormalizer(String),
    #[error("non-stochastic matrix: {0}")]
    NotStochastic(String),
    #[error("empty ensemble")]
    EmptyEnsemble,
    #[error("schema error: {0}")]
    Schema(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
}

pub type Result<T> = std::result::Result<T, QibError>;
