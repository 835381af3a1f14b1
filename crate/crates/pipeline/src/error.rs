use std::io;
use std::path::{Path, PathBuf};

use thiserror::Error;

pub type Result<T> = std::result::Result<T, PipelineError>;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Core(#[from] lrp_core::Error),

    #[error("{source_name}: line {line}: {message}")]
    Corpus {
        source_name: String,
        line: usize,
        message: String,
    },

    #[error("matrix file {}: {message}", path.display())]
    MatrixFile { path: PathBuf, message: String },

    #[error("manifest {}: {message}", path.display())]
    Manifest { path: PathBuf, message: String },

    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{failed} of {total} samples failed")]
    Partial { failed: usize, total: usize },
}

impl PipelineError {
    /// 1 for partial per-sample failures, 2 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Partial { .. } => 1,
            _ => 2,
        }
    }

    pub(crate) fn io(path: &Path) -> impl FnOnce(io::Error) -> Self + '_ {
        move |source| PipelineError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}
