use thiserror::Error;

/// Errors raised by the numerical pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("unsupported dimension {0} (only 1 and 2 are supported)")]
    UnsupportedDimension(usize),
    #[error("grid points must be a power of two >= 8, got {0}")]
    BadPoints(usize),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("ellipticity violated at node {node}: eigenvalue {value}")]
    Ellipticity { node: usize, value: f64 },
    #[error("solver did not converge after {iterations} iterations (residual {residual:e}, contrast {contrast})")]
    NoConvergence {
        iterations: usize,
        residual: f64,
        contrast: f64,
    },
    #[error("right-hand side has nonzero mean {0:e}")]
    NonzeroMean(f64),
    #[error("symbol not admissible: {0}")]
    NotAdmissible(String),
    #[error("ill-posed frequency reached: mu = {mu:e} at |xi| = {xi}")]
    IllPosed { mu: f64, xi: f64 },
    #[error("time step {dt} exceeds the stability bound {bound}")]
    Cfl { dt: f64, bound: f64 },
    #[error("non-finite value at step {0}")]
    NonFinite(usize),
    #[error("torus horizon exceeded: need {needed}, have {available}")]
    Horizon { needed: f64, available: f64 },
    #[error("Newton iteration failed: {0}")]
    Newton(String),
    #[error("fit rejected: {0}")]
    Fit(String),
    #[error("missing corrector order {0}")]
    MissingOrder(usize),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
