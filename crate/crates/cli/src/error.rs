use std::path::PathBuf;

use survkit::SurvError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error("config line {line}: {message}")]
    ConfigLine { line: usize, message: String },
    #[error("missing input file {}", .0.display())]
    MissingFile(PathBuf),
    #[error("data: {0}")]
    Data(#[source] SurvError),
    #[error("training failed: {0}")]
    Training(String),
    #[error("{}: {source}", .path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    /// Process exit code: 2 configuration, 3 data or I/O, 4 training.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::ConfigLine { .. } => 2,
            CliError::MissingFile(_) | CliError::Data(_) | CliError::Io { .. } => 3,
            CliError::Training(_) => 4,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }
}

impl From<SurvError> for CliError {
    fn from(e: SurvError) -> Self {
        match e {
            SurvError::MissingFile(p) => CliError::MissingFile(p),
            other => CliError::Data(other),
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
