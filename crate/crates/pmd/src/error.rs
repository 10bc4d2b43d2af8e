use thiserror::Error;

/// Errors produced by models, density machinery, and the inference drivers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Every particle weight underflowed to zero. The weight update cannot be
    /// normalized; the caller decides whether and how to recover.
    #[error("all particle weights vanished (total weight depletion)")]
    DegenerateWeights,

    #[error("model does not expose gradients")]
    GradientUnavailable,

    #[error("config mismatch: {0}")]
    ConfigMismatch(String),

    /// The grid used to build a brute-force posterior does not cover enough
    /// posterior mass to serve as ground truth.
    #[error("grid mass leak: boundary cells carry {boundary_mass:.3e} of posterior mass (limit {limit:.1e})")]
    MassLeak { boundary_mass: f64, limit: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;
