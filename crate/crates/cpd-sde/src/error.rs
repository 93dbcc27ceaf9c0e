use std::path::{Path, PathBuf};

/// Everything a command can fail with. [`CliError::exit_code`] maps each
/// variant onto the process exit status.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] cpd_sde_core::Error),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{}: {source}", path.display())]
    Json { path: PathBuf, source: serde_json::Error },
    #[error("{}: {source}", path.display())]
    Csv { path: PathBuf, source: csv::Error },
    #[error("{0}")]
    Input(String),
    #[error("{failed} of {total} corpus jobs failed")]
    CorpusFailures { failed: usize, total: usize, numerical: bool },
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn json(path: &Path, source: serde_json::Error) -> Self {
        Self::Json {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn csv(path: &Path, source: csv::Error) -> Self {
        Self::Csv {
            path: path.to_path_buf(),
            source,
        }
    }

    /// 3 for numerical failures during training or scoring, 2 for anything
    /// wrong with inputs, configs or the file system.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(cpd_sde_core::Error::Numerical { .. }) => 3,
            CliError::CorpusFailures { numerical: true, .. } => 3,
            _ => 2,
        }
    }
}
