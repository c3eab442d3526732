use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = RunError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum RunError {
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    NonConvergence(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
    #[error(transparent)]
    Core(#[from] roadcap_core::Error),
    #[error("stage `{stage}` failed: {source}")]
    Stage { stage: &'static str, source: Box<RunError> },
}

impl RunError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        RunError::Io { path: path.into(), source }
    }

    pub fn csv(path: impl Into<PathBuf>, source: csv::Error) -> Self {
        if source.is_io_error() {
            if let csv::ErrorKind::Io(e) = source.into_kind() {
                return RunError::Io { path: path.into(), source: e };
            }
            unreachable!()
        }
        RunError::Csv { path: path.into(), source }
    }

    pub fn in_stage(self, stage: &'static str) -> Self {
        match self {
            RunError::Stage { .. } => self,
            other => RunError::Stage { stage, source: Box::new(other) },
        }
    }

    /// 2 validation, 3 non-convergence or divergence, 4 I/O.
    pub fn exit_code(&self) -> u8 {
        match self {
            RunError::Validation(_) | RunError::Csv { .. } => 2,
            RunError::NonConvergence(_) => 3,
            RunError::Io { .. } => 4,
            RunError::Core(e) => match e {
                roadcap_core::Error::Divergence { .. } => 3,
                _ => 2,
            },
            RunError::Stage { source, .. } => source.exit_code(),
        }
    }
}
