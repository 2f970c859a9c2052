//! Error type shared across the library.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("mesh resolution must be at least 1x1 (got {nx}x{ny})")]
    InvalidMeshResolution { nx: usize, ny: usize },

    #[error("point ({0}, {1}) lies outside the closed unit square")]
    PointOutsideDomain(f64, f64),

    #[error("diffusion constant must be positive (got {0})")]
    NonPositiveDiffusion(f64),

    #[error("quadrature order {0} is unsupported (supported range: 2..=6)")]
    UnsupportedQuadOrder(usize),

    #[error("density interpolates to a non-positive total mass; cannot normalize")]
    DegenerateDensity,

    #[error("linear solve failed at time index {index}: {reason}")]
    LinearSolve { index: usize, reason: String },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("configuration error in `{field}`: {reason}")]
    Config { field: String, reason: String },

    #[error("particle step too large: |v| dt + 6 sqrt(2 mu dt) = {0:.4} >= 1")]
    StepTooLarge(f64),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            reason: reason.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
