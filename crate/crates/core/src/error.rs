use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("invalid trace: {0}")]
    InvalidTrace(String),

    #[error("invalid audio: {0}")]
    InvalidAudio(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("stage `{stage}` failed on {input}: {source}")]
    Stage {
        stage: &'static str,
        input: String,
        #[source]
        source: Box<Error>,
    },

    #[error("internal error: {0}")]
    Internal(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            msg: msg.into(),
        }
    }

    /// Wraps an error with the pipeline stage and input it occurred on.
    pub fn in_stage(self, stage: &'static str, input: impl Into<String>) -> Self {
        Error::Stage {
            stage,
            input: input.into(),
            source: Box::new(self),
        }
    }

    /// Stage name if this error was raised inside a pipeline stage.
    pub fn stage(&self) -> Option<&'static str> {
        match self {
            Error::Stage { stage, .. } => Some(stage),
            _ => None,
        }
    }

    /// Process exit code: 2 config, 3 data, 4 internal.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::InvalidArgument(_) => 2,
            Error::Io { .. }
            | Error::Parse { .. }
            | Error::InvalidTrace(_)
            | Error::InvalidAudio(_)
            | Error::InvalidDataset(_) => 3,
            Error::Stage { source, .. } => source.exit_code(),
            Error::Internal(_) => 4,
        }
    }
}
