use thiserror::Error;

/// Errors produced by the simulator library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    /// Every violation found while reading a run configuration.
    #[error("invalid configuration: {}", .0.join("; "))]
    Invalid(Vec<String>),

    #[error("usage error: {0}")]
    Usage(String),

    #[error("solver did not converge after {iterations} iterations (relative residual {residual:.3e}, target {target:.3e})")]
    Solver {
        iterations: usize,
        residual: f64,
        target: f64,
        /// Iterate with the smallest residual seen.
        best: BestIterate,
    },

    #[error("step failed at t = {t}: {source}")]
    Step {
        t: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("nonlinear iteration stalled after {iterations} sweeps (residual {residual:.3e})")]
    Picard { iterations: usize, residual: f64 },

    #[error("Newton iteration stagnated after {iterations} iterations (residual {residual:.3e})")]
    Newton { iterations: usize, residual: f64 },

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

/// Node vector carried by a failed solve; `Debug` prints only its length.
#[derive(Clone, PartialEq)]
pub struct BestIterate(pub Vec<f64>);

impl std::fmt::Debug for BestIterate {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "BestIterate(len = {})", self.0.len())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn usage(msg: impl Into<String>) -> Self {
        Error::Usage(msg.into())
    }
}
