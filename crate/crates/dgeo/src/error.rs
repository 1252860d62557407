use std::io;
use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    /// Malformed or schema-violating JSON input.
    #[error("{source_name}: line {line}, column {column}: {message}")]
    Json {
        source_name: String,
        line: usize,
        column: usize,
        message: String,
    },

    #[error("{0}")]
    Csv(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error(transparent)]
    Core(#[from] dgeo_core::Error),
}

impl CliError {
    /// 2 for theorem hypotheses that do not apply, 1 for everything else.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(dgeo_core::Error::NotApplicable(_)) => 2,
            _ => 1,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        CliError::Io { path: path.into(), source }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
