use std::path::PathBuf;

/// Errors produced anywhere in the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("degenerate vector: zero magnitude")]
    DegenerateVector,

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("integration failed: integrand is not finite at x = {at}")]
    IntegrationFailure { at: f64 },

    #[error("no accepted samples out of {proposals} proposals (acceptance estimate {acceptance_estimate})")]
    InsufficientSamples { proposals: usize, acceptance_estimate: f64 },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}

pub(crate) fn check_len(what: &str, got: usize, want: usize) -> Result<()> {
    if got != want {
        return Err(invalid(format!("{what}: expected length {want}, got {got}")));
    }
    Ok(())
}
