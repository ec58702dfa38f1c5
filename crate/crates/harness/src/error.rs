//! Harness-level errors: file handling, malformed inputs, configuration.

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    /// Numerical or validation failure inside the estimators.
    #[error(transparent)]
    Core(#[from] ppk_core::Error),

    #[error("malformed csv {path}: {message}")]
    MalformedCsv { path: String, message: String },

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("invalid configuration: {0}")]
    Config(String),
}

impl HarnessError {
    /// Exit code the CLI maps this error to: 2 for numerical failures,
    /// 1 for everything the user can fix (usage, files, configuration).
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Core(_) => 2,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, HarnessError>;
