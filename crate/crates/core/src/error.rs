use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid measure: {0}")]
    InvalidMeasure(String),

    #[error("matrix is not symmetric (max asymmetry {max_asymmetry:e})")]
    NotSymmetric { max_asymmetry: f64 },

    #[error("matrix is not positive semidefinite (smallest eigenvalue {min_eigenvalue:e})")]
    NotPsd { min_eigenvalue: f64 },

    #[error("covariance is singular (smallest eigenvalue {min_eigenvalue:e}); add a small jitter such as 1e-9·I")]
    SingularCovariance { min_eigenvalue: f64 },

    #[error("measures of different kinds (gaussian/discrete) cannot be mixed")]
    MixedTags,

    #[error("unsupported input: {0}")]
    Unsupported(String),

    #[error("invalid weights: {0}")]
    InvalidWeights(String),

    #[error("transport problem has {entries} coupling entries, above the configured cap of {cap}")]
    SizeCap { entries: usize, cap: usize },

    #[error("{solver} did not converge within {iterations} iterations (last residual {residual:e})")]
    NoConvergence {
        solver: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("invalid schedule: {0}")]
    Schedule(String),

    #[error("round {round}, agent {agent}: {source}")]
    Round {
        round: usize,
        agent: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("{}: field `{field}`: {message}", path.display())]
    Config {
        path: PathBuf,
        field: String,
        message: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
