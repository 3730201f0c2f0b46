use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("size limit exceeded: {what} = {got} > {limit}")]
    SizeLimit {
        what: &'static str,
        got: usize,
        limit: usize,
    },

    #[error(
        "vector is not a numerical kernel vector: ||Qx|| = {residual:e} (allowed {allowed:e})"
    )]
    KernelMismatch { residual: f64, allowed: f64 },

    #[error("certificate identity `{identity}` violated: residual {residual:e}")]
    InvariantViolation {
        identity: &'static str,
        residual: f64,
    },

    #[error("t' = {t_prime} outside the positivity window 0 < 2t' < {lambda2}")]
    WindowViolation { t_prime: f64, lambda2: f64 },

    #[error("trial sigma={sigma} trial={trial}: exactness condition holds but corr = {corr}")]
    SoundnessViolation { sigma: f64, trial: usize, corr: f64 },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
