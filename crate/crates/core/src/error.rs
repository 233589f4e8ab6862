use thiserror::Error;

#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    DimensionMismatch { what: &'static str, expected: usize, got: usize },

    #[error("ODE solver diverged at t = {time}")]
    SolverDivergence { time: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("singular local design at t = {time} ({points} points with positive kernel weight)")]
    SingularDesign { time: f64, points: usize },

    #[error("non-finite value encountered at t = {time}")]
    InvalidState { time: f64 },

    /// `C = <G, G>_W` is numerically singular, so `theta` is not determined
    /// by the trajectory.
    #[error("parameter not identifiable: reciprocal condition of C is {rcond:e}, numerical rank {rank}")]
    NonIdentifiable { rcond: f64, rank: usize, spectrum: Vec<f64>, null_space: Vec<Vec<f64>> },

    #[error("bootstrap replicate {replicate} failed: {source}")]
    Bootstrap {
        replicate: usize,
        #[source]
        source: Box<Error>,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn check_len(what: &'static str, expected: usize, got: usize) -> Result<()> {
        if expected == got {
            Ok(())
        } else {
            Err(Error::DimensionMismatch { what, expected, got })
        }
    }

    /// True for failures that originate in the identifiability check,
    /// including ones wrapped by the bootstrap.
    pub fn is_non_identifiable(&self) -> bool {
        match self {
            Error::NonIdentifiable { .. } => true,
            Error::Bootstrap { source, .. } => source.is_non_identifiable(),
            _ => false,
        }
    }
}
