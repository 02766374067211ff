use std::path::{Path, PathBuf};

use dlkd_core::experiment::ArmFailure;

pub type Result<T, E = CliError> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("usage error: {0}")]
    Usage(String),
    #[error("config error in {path}: line {line}: {message}")]
    Config { path: PathBuf, line: usize, message: String },
    #[error("{path}: format error at byte {offset}: {message}")]
    Format { path: PathBuf, offset: u64, message: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Core(#[from] dlkd_core::Error),
    #[error("experiment failed: {0}")]
    Experiment(#[from] ArmFailure),
    #[error("gradient check failed: {0}")]
    Gradcheck(String),
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io { path: path.to_path_buf(), source }
    }

    /// 1 for usage and configuration mistakes, 2 for data and file problems,
    /// 3 for numeric failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Config { .. } => 1,
            CliError::Format { .. } | CliError::Io { .. } => 2,
            CliError::Core(e) => core_exit_code(e),
            CliError::Experiment(f) => core_exit_code(&f.source),
            CliError::Gradcheck(_) => 3,
        }
    }
}

fn core_exit_code(e: &dlkd_core::Error) -> i32 {
    use dlkd_core::Error::*;
    match e {
        Usage(_) | Config(_) | Parameter(_) => 1,
        Shape(_) | Input(_) | Consistency(_) => 2,
        Training { .. } => 3,
    }
}
