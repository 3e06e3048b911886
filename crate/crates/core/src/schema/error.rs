use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Violation {
    #[error("required field is missing")]
    Missing,
    #[error("must not be empty")]
    Empty,
    #[error("expected {expected}, found {found}")]
    WrongType {
        expected: &'static str,
        found: &'static str,
    },
    #[error("value {value} outside [{min}, {max}]")]
    OutOfRange { value: f64, min: f64, max: f64 },
    #[error("per-model score {0} is not an integer")]
    NotInteger(f64),
    #[error("{0} is not a non-negative integer")]
    NotACount(f64),
    #[error("unknown emotion label `{0}`")]
    UnknownEmotion(String),
    #[error("unknown gender `{0}`")]
    UnknownGender(String),
    #[error("color map must cover the 11 reference colors: {0}")]
    ColorKeys(String),
    #[error("color proportions sum to {0}, expected 1")]
    ColorSum(f64),
    #[error("empty model id in suffixed key")]
    EmptyModelId,
    #[error("{0}")]
    Inconsistent(String),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SchemaError {
    #[error("malformed JSON: {0}")]
    MalformedSyntax(String),
    #[error("schema violation in `{field}`{}: {reason}", model.as_ref().map(|m| format!(" (model `{m}`)")).unwrap_or_default())]
    SchemaViolation {
        field: String,
        model: Option<String>,
        reason: Violation,
    },
    #[error("non-finite number in `{0}`")]
    NonFinite(String),
}

impl SchemaError {
    /// Name of the offending field, when the error is tied to one.
    pub fn field(&self) -> Option<&str> {
        match self {
            SchemaError::SchemaViolation { field, .. } => Some(field),
            SchemaError::NonFinite(field) => Some(field),
            SchemaError::MalformedSyntax(_) => None,
        }
    }
}
