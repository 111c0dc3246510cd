//! De-identification and kinematics building blocks for pose-annotated
//! clinical videos.
//!
//! The pipeline consumes per-frame BODY_25 keypoint files and decoded frame
//! images. [`tracking`] gives every person a stable id, [`interpolation`]
//! repairs unreliable keypoints, [`patient`] picks the patient track,
//! [`blur`] estimates face boxes and renders them, [`overrides`] carries
//! reviewer edits, and [`eval`] scores face detection against ground truth.

pub mod blur;
pub mod eval;
pub mod ingest;
pub mod interpolation;
pub mod model;
pub mod overrides;
pub mod patient;
pub mod synth;
pub mod tracking;

pub use model::{body25, FramePose, Keypoint, Person, Point, Skeleton, Track, VideoGeometry};
