use thiserror::Error;

pub type Result<T, E = ExplainError> = std::result::Result<T, E>;

/// Every failure the engine can report.
///
/// Variants map one-to-one onto the error classes surfaced by the CLI and the
/// arena service, so callers can translate them into exit codes or HTTP
/// statuses without string matching.
#[derive(Debug, Error)]
pub enum ExplainError {
    #[error("parse error: {0}")]
    Parse(String),

    #[error("missing value in column '{column}' at row {row}")]
    MissingValue { column: String, row: usize },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("unknown level '{level}' for categorical column '{column}'")]
    Level { column: String, level: String },

    #[error("predictor is not deterministic: probe row {row} scored {first} then {second}")]
    NonDeterministicPredictor { row: usize, first: f64, second: f64 },

    #[error("predictor contract violated: {0}")]
    PredictorContract(String),

    #[error("classification score {score} at row {row} is outside [0, 1]")]
    Range { row: usize, score: f64 },

    #[error("degenerate target: {0}")]
    DegenerateTarget(String),

    #[error("invalid parameter '{field}': {message}")]
    Parameter { field: String, message: String },

    #[error("design matrix is singular: {0}")]
    Singular(String),

    #[error("external predictor timed out after {0:?}")]
    Timeout(std::time::Duration),

    #[error("external predictor protocol error: {0}")]
    Protocol(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl ExplainError {
    pub(crate) fn param(field: impl Into<String>, message: impl Into<String>) -> Self {
        ExplainError::Parameter {
            field: field.into(),
            message: message.into(),
        }
    }

    /// Name of the offending request field, when the error is attributable to one.
    pub fn field(&self) -> Option<&str> {
        match self {
            ExplainError::Parameter { field, .. } => Some(field),
            ExplainError::Level { column, .. } => Some(column),
            _ => None,
        }
    }
}
