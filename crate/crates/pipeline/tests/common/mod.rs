#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};

use deidpose::fixture::{write_fixture, Fixture, FixtureSpec};
use deidpose::pipeline::{run_pipeline, RunOptions, VideoPaths};
use deidpose::project::{create_project, ProjectConfig, Settings, Step};
use deidpose_core::ingest::frame_file_name;

/// Writes the default fixture under `dir/inputs` and creates a project for it.
pub fn fixture_project(dir: &Path, name: &str, settings: Settings) -> (ProjectConfig, Fixture) {
    let inputs = dir.join("inputs");
    let fx = if inputs.join("poses").exists() {
        Fixture {
            stem: "demo".into(),
            pose_dir: inputs.join("poses/demo"),
            frame_dir: inputs.join("frames/demo"),
            metadata: inputs.join("metadata/demo.csv"),
        }
    } else {
        write_fixture(&inputs, &FixtureSpec::default()).unwrap()
    };
    let cfg = create_project(&dir.join("projects"), name, vec![fx.new_video()], &[fx.metadata.clone()], settings).unwrap();
    (cfg, fx)
}

pub fn run_until(cfg: &mut ProjectConfig, until: Option<Step>) {
    let report = run_pipeline(
        cfg,
        &RunOptions {
            until,
            ..Default::default()
        },
    )
    .unwrap();
    report.into_result().unwrap();
}

/// Bytes of every rendered frame, in index order.
pub fn rendered_bytes(cfg: &ProjectConfig, stem: &str, frames: u64) -> Vec<Vec<u8>> {
    let dir = VideoPaths::new(cfg, stem).rendered;
    (0..frames).map(|i| fs::read(dir.join(frame_file_name(i))).unwrap()).collect()
}

pub fn files_in(dir: &Path) -> Vec<PathBuf> {
    let mut v: Vec<PathBuf> = fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).collect();
    v.sort();
    v
}
