use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("kernel evaluated at its singularity y = 0")]
    Singularity,

    #[error("domain error: {0}")]
    Domain(String),

    #[error("capability error: {0}")]
    Capability(String),

    #[error("operator not invertible on this input: {0}")]
    Invertibility(String),

    #[error("step size {dt} violates CFL bound {limit}")]
    StepSize { dt: f64, limit: f64 },

    #[error("non-finite gradient, optimizer step refused")]
    Poisoned,

    #[error("training diverged at step {step}: {detail}")]
    Divergence { step: usize, detail: String },

    #[error("time range mismatch: {0}")]
    TimeRange(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
