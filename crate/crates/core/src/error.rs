use thiserror::Error;

/// Errors produced anywhere in the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("parse error on line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("conflicting rows for station `{station}`, variable `{variable}` at {date}")]
    Conflict {
        station: String,
        variable: String,
        date: String,
    },

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("missing data for station `{station}`: variable `{variable}` at {quarter}")]
    MissingData {
        station: String,
        variable: String,
        quarter: String,
    },

    #[error("not found: {0}")]
    NotFound(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("sample size too small: {0}")]
    SampleSize(String),

    #[error("singular matrix: {0}")]
    Singular(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("optimizer did not converge after {iterations} iterations (gradient norm {grad_norm:.3e}, last iterate {last:?})")]
    NotConverged {
        iterations: usize,
        grad_norm: f64,
        last: Vec<f64>,
    },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("comparison error: {0}")]
    Comparison(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
