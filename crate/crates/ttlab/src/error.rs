use thiserror::Error;

#[derive(Debug, Error)]
pub enum LabError {
    #[error("config schema error: {0}")]
    Schema(String),

    #[error("tolerance check failed: {0}")]
    Tolerance(String),

    #[error("resource budget exceeded: {0}")]
    Budget(String),

    #[error(transparent)]
    Core(ttlab_core::Error),

    #[error("i/o error on {path}: {source}")]
    Io { path: String, source: std::io::Error },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl From<ttlab_core::Error> for LabError {
    fn from(e: ttlab_core::Error) -> Self {
        match e {
            ttlab_core::Error::BudgetExceeded { .. } => LabError::Budget(e.to_string()),
            other => LabError::Core(other),
        }
    }
}

impl LabError {
    /// Process exit code: 1 tolerance, 2 schema, 3 budget; other failures use 2.
    pub fn exit_code(&self) -> i32 {
        match self {
            LabError::Tolerance(_) => 1,
            LabError::Budget(_) => 3,
            _ => 2,
        }
    }

    pub(crate) fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        LabError::Io { path: path.display().to_string(), source }
    }
}

pub type LabResult<T> = std::result::Result<T, LabError>;
