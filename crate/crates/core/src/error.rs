use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid band: {0}")]
    InvalidBand(String),

    #[error("band ratio r = {r} is below one bucket; the protocol degenerates to single-resonance Rabi")]
    BandTooNarrow { r: f64 },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: String, reason: String },

    #[error("drive ratio b_eff/omega = {ratio:.3e} exceeds the three-harmonic validity limit {limit:.3e}")]
    DriveOutsideValidity { ratio: f64, limit: f64 },

    #[error("need at least {need} samples, got {got}")]
    TooFewSamples { got: usize, need: usize },

    #[error("tensor dimension {dim} exceeds the brute-force guard {limit}; use the fast element-power path")]
    DimensionGuard { dim: u128, limit: u128 },

    #[error("state vector not normalized: |norm^2 - 1| = {defect:.3e}")]
    NotNormalized { defect: f64 },

    #[error("grid is not strictly ascending at index {index}")]
    UnsortedGrid { index: usize },

    #[error("value {value} outside [{lo}, {hi}]")]
    OutOfRange { value: f64, lo: f64, hi: f64 },

    #[error("eigensolver failed: {0}")]
    Eigen(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub(crate) fn param(name: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name: name.into(),
            reason: reason.into(),
        }
    }
}
