use thiserror::Error;

/// Errors surfaced by the estimation pipeline.
#[derive(Debug, Error)]
pub enum QlossError {
    /// A truncated-basis computation lost more probability mass than the
    /// cutoff certificate allows.
    #[error("cutoff too small in {context}: deficit {deficit:.3e} exceeds tail tolerance {tail_tol:.3e}")]
    CutoffTooSmall {
        context: &'static str,
        deficit: f64,
        tail_tol: f64,
    },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("covariance is not a physical Gaussian state (min eigenvalue of V + i\u{3a9} = {min_eig:.3e})")]
    NonPhysicalCovariance { min_eig: f64 },

    #[error("squeezed-thermal normal form did not reproduce the covariance (residual {residual:.3e})")]
    NormalFormResidual { residual: f64 },

    #[error(
        "receiver existence failure at theta_hat = {theta_hat}: max CFI/QFI = {ratio:.4} < 0.9"
    )]
    ExistenceRegion { theta_hat: f64, ratio: f64 },

    #[error("empty sample set")]
    EmptySamples,

    #[error("insufficient trials for {context}: need {needed}, got {got}")]
    InsufficientTrials {
        context: &'static str,
        needed: usize,
        got: usize,
    },

    #[error("finite-difference derivative step failed: {0}")]
    DerivativeStep(String),

    #[error("all {n_trials} trials at n = {n_total} failed; first failure: {first}")]
    SweepFailed {
        n_total: usize,
        n_trials: usize,
        first: String,
        existence: bool,
    },

    #[error("numeric check failed: {0}")]
    Numeric(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, QlossError>;
