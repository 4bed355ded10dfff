use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("{what} = {value} is outside its domain {domain}")]
    Domain {
        what: &'static str,
        value: f64,
        domain: &'static str,
    },

    #[error("coincident positions: interaction direction is undefined")]
    SingularDirection,

    #[error("metabolic integration produced a non-finite value for {species}")]
    Integration { species: &'static str },

    #[error("population of {population} cells exceeds the configured cap of {cap}")]
    Resource { cap: usize, population: usize },

    #[error("covariance factorization failed even with jitter {jitter:e}")]
    Conditioning { jitter: f64 },

    #[error("statistic is undefined: {0}")]
    Undefined(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("schema error in {path}: {message}")]
    Schema { path: String, message: String },

    #[error("file not found: {}", .0.display())]
    FileNotFound(PathBuf),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn domain(what: &'static str, value: f64, domain: &'static str) -> Self {
        Error::Domain {
            what,
            value,
            domain,
        }
    }

    /// Input-side failures (bad files, schemas, arguments) as opposed to
    /// numerical or resource failures.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::Config(_)
                | Error::Domain { .. }
                | Error::InvalidInput(_)
                | Error::Schema { .. }
                | Error::FileNotFound(_)
                | Error::Io(_)
                | Error::Csv(_)
                | Error::Json(_)
        )
    }
}
