use thiserror::Error;

/// Errors raised across the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("point count {0} is odd")]
    OddPointCount(usize),
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("interval {0} contains no grid nodes")]
    EmptySet(String),
    #[error("closures of {0} and {1} intersect")]
    Overlap(String, String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("matrix is not symmetric (relative defect {0:e})")]
    NonSymmetric(f64),
    #[error("potential admits a nonpositive mode ({0:e})")]
    NegativeMode(f64),
    #[error("support violation: {0}")]
    Support(String),
    #[error("exterior data incompatible with zero initial state: {0}")]
    IncompatibleData(String),
    #[error("power iteration did not converge in {iterations} steps (best estimate {estimate:e})")]
    IterationLimit { iterations: usize, estimate: f64 },
    #[error("extension mesh too coarse: {0}")]
    Mesh(String),
    #[error("dictionary Gram matrix is ill-conditioned (condition {0:e})")]
    Conditioning(f64),
    #[error("family bump width {width} is below four grid spacings ({spacing})")]
    Resolution { width: f64, spacing: f64 },
    #[error("quadrature failed to reach tolerance: {0}")]
    Quadrature(String),
    #[error("not enough usable points for a fit: {0}")]
    Fit(String),
    #[error("Poisson operator is not injective (smallest singular value {0:e})")]
    Injectivity(f64),
    #[error("config error: {0}")]
    Config(String),
    #[error("corrupted cache entry {0}")]
    CacheCorrupted(String),
    #[error("malformed binary payload: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
