use std::path::{Path, PathBuf};

/// Failures surfaced by the harness, each mapped to a process exit code.
#[derive(Debug, thiserror::Error)]
pub enum LabError {
    #[error("{0}")]
    Usage(String),

    #[error("{0}")]
    Incompatible(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error(transparent)]
    Core(#[from] dpl_core::Error),

    #[error("{failed} of {total} bench cells failed")]
    PartialBench { failed: usize, total: usize },
}

pub type LabResult<T> = Result<T, LabError>;

pub const EXIT_OK: i32 = 0;
pub const EXIT_PARTIAL: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_INCOMPATIBLE: i32 = 3;

impl LabError {
    pub fn exit_code(&self) -> i32 {
        match self {
            LabError::Usage(_) | LabError::Io { .. } => EXIT_USAGE,
            LabError::Incompatible(_) | LabError::Format { .. } => EXIT_INCOMPATIBLE,
            LabError::Core(dpl_core::Error::Shape(_)) => EXIT_INCOMPATIBLE,
            LabError::Core(_) => EXIT_USAGE,
            LabError::PartialBench { .. } => EXIT_PARTIAL,
        }
    }

    pub fn io(path: impl AsRef<Path>, source: std::io::Error) -> Self {
        LabError::Io { path: path.as_ref().to_path_buf(), source }
    }

    pub fn format(path: impl AsRef<Path>, message: impl Into<String>) -> Self {
        LabError::Format { path: path.as_ref().to_path_buf(), message: message.into() }
    }
}

macro_rules! usage {
    ($($arg:tt)*) => {
        $crate::error::LabError::Usage(format!($($arg)*))
    };
}
pub(crate) use usage;
