//! Synthetic demo inputs: a short clinic-like scene with a patient walking
//! near the frame center, a clinician at the edge and a brief visitor.

use std::fs;
use std::path::{Path, PathBuf};

use deidpose_core::ingest::{frame_file_name, keypoint_file_name, write_rgb};
use deidpose_core::model::{body25, FramePose, Keypoint, Person, Point};
use deidpose_core::synth::{perturb, skeleton_at, textured_frame};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{io_err, PipelineError};
use crate::project::NewVideo;

#[derive(Debug, Clone, PartialEq)]
pub struct FixtureSpec {
    pub stem: String,
    pub frames: u64,
    pub width: u32,
    pub height: u32,
    pub seed: u64,
}

impl Default for FixtureSpec {
    fn default() -> Self {
        Self {
            stem: "demo".into(),
            frames: 60,
            width: 320,
            height: 180,
            seed: 7,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Fixture {
    pub stem: String,
    pub pose_dir: PathBuf,
    pub frame_dir: PathBuf,
    pub metadata: PathBuf,
}

impl Fixture {
    pub fn new_video(&self) -> NewVideo {
        NewVideo {
            stem: self.stem.clone(),
            source: None,
            pose_dir: self.pose_dir.clone(),
            frame_dir: Some(self.frame_dir.clone()),
        }
    }
}

/// Walker index, position, for every person in frame `f`, in file order.
fn positions(spec: &FixtureSpec, f: u64) -> Vec<(usize, Point)> {
    let w = spec.width as f64;
    let h = spec.height as f64;
    let t = f as f64 / spec.frames.max(2).saturating_sub(1) as f64;
    let mut out = vec![
        // Clinician first so file order does not favor the patient.
        (1, Point::new(0.875 * w, 0.5 * h + 3.0 * (f as f64 * 0.2).sin())),
        (0, Point::new((0.35 + 0.3 * t) * w, 0.5 * h)),
    ];
    let visit = (spec.frames / 3)..(spec.frames / 3 + (spec.frames * 3) / 10);
    if visit.contains(&f) {
        out.push((2, Point::new(0.125 * w, 0.45 * h)));
    }
    out
}

/// Builds the pose frames. Facial keypoints are sometimes missing or weak;
/// neck and mid-hip always stay reliable. The first frame of every walker
/// is clean so each facial keypoint has a good observation.
pub fn fixture_poses(spec: &FixtureSpec) -> Vec<FramePose> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let body = 0.6 * spec.height as f64;
    let mut seen = [false; 3];
    (0..spec.frames)
        .map(|f| {
            let people = positions(spec, f)
                .into_iter()
                .map(|(walker, p)| {
                    let mut s = perturb(&skeleton_at(p, body), 0.8, 0.0, &mut rng);
                    let first = !std::mem::replace(&mut seen[walker], true);
                    for (k, kp) in s.keypoints.iter_mut().enumerate() {
                        kp.c = rng.random_range(0.6..0.95);
                        if first || k == body25::NECK || k == body25::MID_HIP {
                            continue;
                        }
                        let roll: f64 = rng.random();
                        if body25::FACE.contains(&k) && roll < 0.05 {
                            *kp = Keypoint::UNDETECTED;
                        } else if roll < 0.15 {
                            kp.c = rng.random_range(0.1..0.45);
                        }
                    }
                    Person::untracked(s)
                })
                .collect();
            FramePose::new(f, people)
        })
        .collect()
}

/// Writes the scene under `dir`: untracked pose files in estimator format,
/// decoded frames and a metadata sidecar.
pub fn write_fixture(dir: &Path, spec: &FixtureSpec) -> Result<Fixture, PipelineError> {
    let fx = Fixture {
        stem: spec.stem.clone(),
        pose_dir: dir.join("poses").join(&spec.stem),
        frame_dir: dir.join("frames").join(&spec.stem),
        metadata: dir.join("metadata").join(format!("{}.csv", spec.stem)),
    };
    for d in [&fx.pose_dir, &fx.frame_dir, &fx.metadata.parent().unwrap().to_path_buf()] {
        fs::create_dir_all(d).map_err(io_err(d))?;
    }
    for frame in fixture_poses(spec) {
        let people: Vec<_> = frame
            .people
            .iter()
            .map(|p| serde_json::json!({ "person_id": [-1], "pose_keypoints_2d": p.skeleton.to_flat() }))
            .collect();
        let path = fx.pose_dir.join(keypoint_file_name(&spec.stem, frame.frame_index));
        let text = serde_json::json!({ "version": 1.3, "people": people }).to_string();
        fs::write(&path, text).map_err(io_err(&path))?;
    }
    for f in 0..spec.frames {
        let img = textured_frame(spec.width, spec.height, f, spec.seed);
        write_rgb(&fx.frame_dir.join(frame_file_name(f)), f, &img).map_err(|e| PipelineError::Input(e.to_string()))?;
    }
    fs::write(&fx.metadata, "subject,visit\nS001,1\n").map_err(io_err(&fx.metadata))?;
    Ok(fx)
}
