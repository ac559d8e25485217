use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("inadmissible Lame pair (lambda = {lambda}, mu = {mu})")]
    Inadmissible { lambda: f64, mu: f64 },
    #[error("kernel evaluated at coincident points")]
    Singularity,
    #[error("self-intersecting curve: {0}")]
    SelfIntersection(String),
    #[error("no cells fit inside the outer domain")]
    NoCells,
    #[error("near-boundary evaluation unsupported: point at distance {distance:.3e} < {limit:.3e}")]
    NearBoundary { distance: f64, limit: f64 },
    #[error("singular system in {context} (condition estimate {condition:.3e})")]
    Singular { context: String, condition: f64 },
    #[error("indefinite Gram matrix ({0})")]
    Indefinite(String),
    #[error("mesh mismatch: {0}")]
    MeshMismatch(String),
    #[error("incompatible resultants: {0}")]
    Incompatible(String),
    #[error("interior trace not rigid (relative residual {0:.3e})")]
    NotRigid(f64),
    #[error("nothing to fit: {0}")]
    NothingToFit(String),
    #[error("eigensolver failed: {0}")]
    Eigen(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
