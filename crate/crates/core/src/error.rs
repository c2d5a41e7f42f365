use std::path::PathBuf;

use crate::tables::PhotonTuple;

/// Errors produced by the simulator.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("index {index} out of range (limit {limit})")]
    IndexOutOfRange { index: usize, limit: usize },

    #[error(
        "quadrature did not converge: estimate {estimate:e}, error estimate {error_estimate:e}"
    )]
    Quadrature { estimate: f64, error_estimate: f64 },

    #[error("photon tuple {tuple} exceeds the photon budget of {limit}")]
    TupleTooLarge { tuple: PhotonTuple, limit: u32 },

    #[error("yield table has no entry for required tuple {0}")]
    MissingTuple(PhotonTuple),

    #[error("gain table has no entry for intensity choice {0:#b}")]
    MissingGain(usize),

    #[error("oracle consistency check failed: {0}")]
    Oracle(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("serialization error on {path}: {message}")]
    Format { path: PathBuf, message: String },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}
