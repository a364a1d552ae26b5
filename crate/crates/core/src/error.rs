use thiserror::Error;

/// Errors raised by the sampling library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParameter { field: String, reason: String },

    #[error("phase schedule rejected: {0}")]
    ScheduleRejected(String),

    #[error("{what}: quadrature did not converge (estimate {estimate:e}, error {error:e}, {evaluations} evaluations)")]
    QuadratureFailure {
        what: String,
        estimate: f64,
        error: f64,
        evaluations: usize,
    },

    #[error(
        "xi = {xi} outside tabulated range |xi| <= {max_xi} (x = {x}, phi = {phi}, alpha = {alpha_re}{alpha_im:+}i)"
    )]
    OutOfRange {
        xi: f64,
        max_xi: f64,
        x: f64,
        phi: f64,
        alpha_re: f64,
        alpha_im: f64,
    },

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("need at least {needed} samples, got {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error("length mismatch: {0}")]
    LengthMismatch(String),

    #[error("fit failed: {0}")]
    FitFailure(String),

    #[error("underdetermined trace: {0}")]
    Underdetermined(String),

    #[error("uniformization kept {selected} of {input} points (minimum {required}); {skipped} targets had no coincident phase")]
    UniformizeFailure {
        selected: usize,
        input: usize,
        required: usize,
        skipped: usize,
    },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(field: &str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            field: field.to_string(),
            reason: reason.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
