//! Project management, the resumable de-identification pipeline, data
//! export and the review service, built on `deidpose-core`.

pub mod error;
pub mod export;
pub mod fixture;
pub mod pipeline;
pub mod project;
pub mod review;
pub mod transcode;

pub use error::PipelineError;
pub use export::{export, ExportItem, ExportOptions, KeypointFormat};
pub use pipeline::{run_pipeline, RunOptions, RunReport, VideoPaths};
pub use project::{create_project, load_project, NewVideo, ProjectConfig, Settings, Step, TargetMode};
