use thiserror::Error;

/// Errors produced by estimators, kernels and the simulation harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("covariance is near-singular: smallest eigenvalue {min:e} <= {tol:e} x largest eigenvalue {max:e}")]
    NearSingularCovariance { min: f64, max: f64, tol: f64 },

    #[error("need at least {needed} observations, got {got}")]
    TooFewObservations { needed: usize, got: usize },

    #[error("need at least {needed} covariate columns, got {got}")]
    TooFewColumns { needed: usize, got: usize },

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("dimension mismatch for {what}: expected {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("degenerate zero-estimator: {0}")]
    DegenerateZeroEstimator(String),

    #[error("column index {index} out of range for p = {p}")]
    IndexOutOfRange { index: usize, p: usize },

    #[error("operation requires independent (whitened) covariate columns")]
    UnsupportedDependenceStructure,

    #[error("invalid scenario: {0}")]
    InvalidScenario(String),

    #[error("invalid covariate model: {0}")]
    InvalidModel(String),

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("estimators require whitened data and a standardized covariate model (mean 0, identity covariance)")]
    NotWhitened,

    #[error("oracle quantities require the true coefficient vector")]
    MissingOracleCoefficients,

    #[error("initial estimator failed on bootstrap resample {resample}: {source}")]
    InitialEstimatorFailure {
        resample: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("need at least 2 usable records for estimator `{estimator}`, got {got}")]
    InsufficientRecords { estimator: String, got: usize },

    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn require_n(got: usize, needed: usize) -> Result<()> {
    if got < needed {
        Err(Error::TooFewObservations { needed, got })
    } else {
        Ok(())
    }
}
