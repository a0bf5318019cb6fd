use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{0} is not prime")]
    NotPrime(u64),
    #[error("matrix is singular")]
    SingularMatrix,
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("{0} is not a constellation point")]
    NotInConstellation(f64),
    #[error("lattice basis is degenerate (smallest normalized singular value {0:e})")]
    DegenerateBasis(f64),
    #[error("no nonzero lattice point within radius {0}")]
    EmptySphere(f64),
    #[error("channel matrix is not invertible")]
    SingularChannel,
    #[error("system matrix is rank deficient over Z_p (rank {rank} < {needed})")]
    RankDeficient { rank: usize, needed: usize },
    #[error("backhaul rate must be positive, got {0}")]
    InvalidBackhaul(f64),
    #[error("instance too large for exhaustive search: K = {0}")]
    InstanceTooLarge(usize),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        Self::Config { path: path.into(), message: message.into() }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
