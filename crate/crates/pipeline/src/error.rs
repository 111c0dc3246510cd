use std::path::PathBuf;

use thiserror::Error;

use crate::project::Step;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("project '{name}' already exists at {}", path.display())]
    Conflict { name: String, path: PathBuf },
    #[error("no project config at {}", .0.display())]
    NotFound(PathBuf),
    #[error("invalid input: {0}")]
    Input(String),
    #[error("{stem}: step {step} failed: {message} (partial state in {})", partial.display())]
    StepFailed {
        stem: String,
        step: Step,
        message: String,
        partial: PathBuf,
    },
    #[error("{stem}: {what} is not ready, run the pipeline through {needs} first")]
    NotReady { stem: String, what: String, needs: Step },
    #[error("{stem}: refusing to export rendered video before quality-check sign-off (pass --skip-quality-check to override)")]
    PrivacyGuard { stem: String },
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("config {}: {message}", path.display())]
    Config { path: PathBuf, message: String },
}

impl PipelineError {
    /// Process exit code for the CLI.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Conflict { .. } | Self::NotFound(_) | Self::Input(_) | Self::Config { .. } => 2,
            Self::StepFailed { .. } | Self::NotReady { .. } | Self::Io { .. } => 3,
            Self::PrivacyGuard { .. } => 4,
        }
    }
}

pub(crate) fn io_err(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> PipelineError {
    let path = path.into();
    move |source| PipelineError::Io { path, source }
}
