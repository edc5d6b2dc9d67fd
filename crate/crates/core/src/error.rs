use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("exponent p = {p} is not subcritical in dimension {dim}")]
    NonSubcritical { p: f64, dim: usize },

    #[error("no shooting bracket for w(0) in [{lo}, {hi}]: {reason}")]
    BracketFailure { lo: f64, hi: f64, reason: String },

    #[error("unknown preset `{0}`")]
    UnknownPreset(String),

    #[error("preset `{preset}` requires parameter `{name}`")]
    MissingParam { preset: String, name: String },

    #[error("bad geometry: {0}")]
    BadGeometry(String),

    #[error("fit is ill-conditioned: {0}")]
    IllConditionedFit(String),

    #[error("Krylov solve stalled after {iterations} iterations (relative residual {residual:.3e})")]
    KrylovStall { iterations: usize, residual: f64 },

    #[error("fixed-point iteration failed after {iterations} iterations (contraction ratio {ratio:.3e})")]
    ContractionFailure { iterations: usize, ratio: f64 },

    #[error("outer reduction diverged: {0}")]
    OuterDivergence(String),

    #[error("seed rejected: {0}")]
    SeedRejected(String),

    #[error("field file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
