use std::fmt;
use std::io::ErrorKind;
use std::path::Path;

use tivac::TivacError;

/// A failure reported as `ERROR <code>: <message>`.
#[derive(Debug)]
pub struct CliError {
    pub code: &'static str,
    pub message: String,
    /// Internal failures exit with 2, user and data errors with 1.
    pub internal: bool,
}

impl CliError {
    pub fn user(code: &'static str, message: impl Into<String>) -> Self {
        CliError {
            code,
            message: message.into(),
            internal: false,
        }
    }

    pub fn internal(code: &'static str, message: impl Into<String>) -> Self {
        CliError {
            code,
            message: message.into(),
            internal: true,
        }
    }

    pub fn io(path: &Path, e: std::io::Error) -> Self {
        TivacError::Io {
            path: path.to_path_buf(),
            source: e,
        }
        .into()
    }

    pub fn exit_code(&self) -> i32 {
        if self.internal {
            2
        } else {
            1
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        // keep the report on one line
        write!(f, "ERROR {}: {}", self.code, self.message.replace('\n', " "))
    }
}

impl From<TivacError> for CliError {
    fn from(e: TivacError) -> Self {
        let code = match &e {
            TivacError::Io { source, .. } if source.kind() == ErrorKind::NotFound => "io_missing_file",
            TivacError::Io { .. } => "io_error",
            TivacError::Parse { .. } | TivacError::Csv(_) => "parse_error",
            TivacError::MissingSubject { .. } => "missing_subject",
            TivacError::InvalidData(_) => "invalid_data",
            TivacError::InvalidSpline(_) => "invalid_spline",
            TivacError::OutOfRange { .. } => "out_of_range",
            TivacError::CorrelationOutOfRange(_) => "correlation_out_of_range",
            TivacError::ZeroVariance(_) => "zero_variance",
            TivacError::InvalidConfig(_) => "invalid_config",
            TivacError::SingularHessian { .. } | TivacError::Diverged(_) => "fit_diverged",
            TivacError::FoldDiverged { .. } => "fold_diverged",
            TivacError::TooManyDropped { .. } => "bootstrap_dropped",
            TivacError::UnknownShape(_) => "bad_shape",
            TivacError::InvalidScenario(_) => "bad_scenario",
            TivacError::Json(_) => "bad_json",
        };
        CliError::user(code, e.to_string())
    }
}
