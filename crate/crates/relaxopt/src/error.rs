use std::path::PathBuf;

/// Process exit codes of the command-line tool.
pub mod exit {
    pub const OK: u8 = 0;
    pub const VALIDATION: u8 = 1;
    pub const DIVERGENCE: u8 = 2;
    pub const ACCEPTANCE: u8 = 3;
}

#[derive(Debug, thiserror::Error)]
pub enum AppError {
    #[error(transparent)]
    Core(#[from] relaxopt_core::Error),

    #[error("config key `{key}`: {reason}")]
    Config { key: String, reason: String },

    #[error("{path}:{line}: {message}")]
    Parse { path: String, line: usize, message: String },

    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },

    #[error("csv output: {0}")]
    Csv(#[from] csv::Error),

    #[error("acceptance check failed: {0}")]
    Acceptance(String),
}

impl AppError {
    pub fn config(key: impl Into<String>, reason: impl Into<String>) -> Self {
        AppError::Config { key: key.into(), reason: reason.into() }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        AppError::Io { path: path.into(), source }
    }

    pub fn exit_code(&self) -> u8 {
        use relaxopt_core::Error as E;
        match self {
            AppError::Core(E::Divergence { .. } | E::SingularStage { .. }) => exit::DIVERGENCE,
            AppError::Acceptance(_) => exit::ACCEPTANCE,
            _ => exit::VALIDATION,
        }
    }
}

pub type AppResult<T> = Result<T, AppError>;
