use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("basis parse error at `{token}`: {reason}")]
    BasisParse { token: String, reason: String },

    #[error("invalid basis: {0}")]
    InvalidBasis(String),

    #[error("mass matrix is numerically singular (condition number {condition:e})")]
    SingularMassMatrix { condition: f64 },

    #[error("integration diverged at step {step}")]
    Divergence { step: usize },

    #[error("sample database is empty")]
    EmptyDatabase,

    #[error("invalid value for `{field}`: {reason}")]
    Validation { field: String, reason: String },

    #[error("config parse error at line {line}: {message}")]
    ConfigParse { line: usize, message: String },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn validation(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Validation {
            field: field.into(),
            reason: reason.into(),
        }
    }
}

pub(crate) fn check_dim(context: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            context,
            expected,
            got,
        })
    }
}
