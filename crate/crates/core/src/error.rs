use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid lattice window: {0}")]
    InvalidWindow(String),

    #[error("field values are not finite at index {index}")]
    NonFinite { index: usize },

    #[error("field shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("invalid mass model: {0}")]
    InvalidModel(String),

    #[error("green table tolerance {tolerance:e} not met (achieved residual {achieved:e})")]
    GreenTolerance { tolerance: f64, achieved: f64 },

    #[error("green table of radius {radius} does not cover offset {needed}")]
    GreenCoverage { radius: usize, needed: usize },

    #[error("spectral grid check failed: {0}")]
    SpectralGrid(String),

    #[error("simulation configuration rejected: {0}")]
    InvalidConfig(String),

    #[error("lattice state became non-finite at site {site:?} (t = {t})")]
    Diverged { site: [i64; 2], t: f64 },

    #[error("boundary energy breach at t = {t}: {ratio:e} of total exceeds {limit:e}")]
    BoundaryBreach { t: f64, ratio: f64, limit: f64 },

    #[error("insufficient data: {0}")]
    Insufficient(String),
}
