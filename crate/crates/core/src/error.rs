use thiserror::Error;

/// Errors raised by the estimators, the bootstrap and the simulation bench.
///
/// Numeric payloads are reported as `f64` regardless of the scalar type used for fitting.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("non-finite value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },

    #[error("column {0} has zero variance")]
    ZeroVarianceColumn(usize),

    #[error("invalid ratio {0}: must lie in (0, 1)")]
    InvalidRatio(f64),

    #[error("degenerate lambda grid: lambda_max is zero (response orthogonal to every column)")]
    DegenerateGrid,

    #[error(
        "coordinate descent did not converge in {iters} sweeps (KKT violation {violation:e})"
    )]
    MaxItersExceeded {
        iters: usize,
        violation: f64,
        /// Best iterate reached before giving up.
        best_beta: Vec<f64>,
    },

    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },

    #[error("singular linear system: {0}")]
    SingularSystem(String),

    #[error("C11 = X_S'X_S / n is singular")]
    SingularC11,

    #[error("all draws are identical")]
    DegenerateDraws,

    #[error("empty bootstrap ensemble")]
    EmptyEnsemble,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("covariance factorization failed: matrix is not positive definite")]
    FactorizationFailure,

    #[error("{failed} of {total} bootstrap replicates failed (first: {first})")]
    TooManyReplicateFailures {
        failed: usize,
        total: usize,
        first: String,
    },

    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },

    #[error("parse error at row {row}, column {col}: {message}")]
    Parse {
        row: usize,
        col: usize,
        message: String,
    },

    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }

    /// Innermost error, skipping context wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Context { source, .. } => source.root(),
            other => other,
        }
    }
}

pub type Result<V, E = Error> = std::result::Result<V, E>;
