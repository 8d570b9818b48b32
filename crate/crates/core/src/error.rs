use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = TivacError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum TivacError {
    #[error("{}:{line}: {reason}", path.display())]
    Parse {
        path: PathBuf,
        line: u64,
        reason: String,
    },

    #[error("cannot read {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("subject {subject} has outcomes in {} but no row in the covariate file", path.display())]
    MissingSubject { subject: String, path: PathBuf },

    #[error("invalid dataset: {0}")]
    InvalidData(String),

    #[error("invalid spline specification: {0}")]
    InvalidSpline(String),

    #[error("time {t} is outside the spline range [{t_min}, {t_max}]")]
    OutOfRange { t: f64, t_min: f64, t_max: f64 },

    #[error("correlation {0} is not strictly inside (-1, 1)")]
    CorrelationOutOfRange(f64),

    #[error("degenerate variance for outcome {0}")]
    ZeroVariance(usize),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("Hessian could not be regularized (ridge reached {ridge:e})")]
    SingularHessian { ridge: f64 },

    #[error("fit did not converge: {0}")]
    Diverged(String),

    #[error("every grid value failed to converge in cross-validation fold {fold}")]
    FoldDiverged { fold: usize },

    #[error("{dropped} of {total} outer bootstrap replicates failed to converge")]
    TooManyDropped { dropped: usize, total: usize },

    #[error("unknown shape `{0}` (expected linear, seasonal, logistic or zero)")]
    UnknownShape(String),

    #[error("invalid scenario: {0}")]
    InvalidScenario(String),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
}

impl TivacError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        TivacError::Io {
            path: path.into(),
            source,
        }
    }
}
