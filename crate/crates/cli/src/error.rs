use thiserror::Error;

/// Failures of the experiment runner. Bad input maps to exit code 1,
/// everything that goes wrong after validation to exit code 2.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("config key `{key}`: {reason}")]
    Config { key: String, reason: String },

    #[error("{0}")]
    Validation(String),

    #[error(transparent)]
    Core(#[from] skewjs_core::Error),

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        CliError::Io { context: context.into(), source }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config { .. } | CliError::Validation(_) => 1,
            CliError::Core(_) | CliError::Io { .. } => 2,
        }
    }
}
