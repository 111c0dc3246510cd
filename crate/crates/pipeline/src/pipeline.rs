//! Resumable per-video pipeline. Every step reads only what earlier steps
//! persisted, so a run can stop after any step and pick up from the ledger.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use anyhow::{anyhow, bail, Context};
use deidpose_core::blur::{compute_face_boxes, read_face_boxes, render, write_face_boxes, BlurSpec, BlurTargets};
use deidpose_core::ingest::{frame_file_name, load_frames, load_pose_files, write_pose_files, FrameStore};
use deidpose_core::interpolation::{interpolate_tracks, BadObservation};
use deidpose_core::model::{body25, tracks_from_frames, apply_tracks_to_frames, FramePose, Track, VideoGeometry};
use deidpose_core::overrides::OverrideSet;
use deidpose_core::patient::{identify_patient, score_tracks, PatientError, TrackScore};
use deidpose_core::tracking::{assign_ids, NewTrackEvent};
use serde::{Deserialize, Serialize};

use crate::error::{io_err, PipelineError};
use crate::project::{ProjectConfig, Settings, Step, TargetMode, VideoEntry};
use crate::transcode::Transcoder;

/// Where one video's artifacts live inside the project.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoPaths {
    pub dir: PathBuf,
    pub poses: PathBuf,
    pub tracked: PathBuf,
    pub tracking: PathBuf,
    pub interpolated: PathBuf,
    pub interpolation_report: PathBuf,
    pub patient: PathBuf,
    pub face_boxes: PathBuf,
    pub overrides: PathBuf,
    pub rendered: PathBuf,
}

impl VideoPaths {
    pub fn new(cfg: &ProjectConfig, stem: &str) -> Self {
        let dir = cfg.dir.join("videos").join(stem);
        Self {
            poses: dir.join("poses.json"),
            tracked: dir.join("poses_tracked"),
            tracking: dir.join("tracking.json"),
            interpolated: dir.join("poses_interpolated"),
            interpolation_report: dir.join("interpolation.csv"),
            patient: dir.join("patient.json"),
            face_boxes: dir.join("face_boxes.csv"),
            overrides: dir.join("overrides.json"),
            rendered: dir.join("rendered"),
            dir,
        }
    }

    /// The artifact a step writes, reported as partial state on failure.
    pub fn output_of(&self, step: Step) -> &Path {
        match step {
            Step::Standardize | Step::QualityCheck => &self.dir,
            Step::LoadPoses => &self.poses,
            Step::Track => &self.tracked,
            Step::Interpolate => &self.interpolated,
            Step::IdentifyPatient => &self.patient,
            Step::FaceBoxes => &self.face_boxes,
            Step::Render => &self.rendered,
        }
    }
}

/// What the load step learned about the inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoseSummary {
    pub geometry: VideoGeometry,
    pub pose_files: usize,
    pub people: usize,
    pub gaps: Vec<u64>,
}

impl PoseSummary {
    /// Denominator for presence ratios.
    pub fn observed_frames(&self) -> u64 {
        self.geometry.frame_count - self.gaps.len() as u64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackSummary {
    pub track_id: u32,
    pub frames: usize,
    pub first_frame: u64,
    pub last_frame: u64,
    pub presence_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackingSummary {
    pub threshold_fraction: f64,
    pub threshold_px: f64,
    pub tracks: Vec<TrackSummary>,
    pub new_tracks: Vec<NewTrackEvent>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatientRecord {
    pub patient: Option<u32>,
    pub presence_threshold: f64,
    pub scores: Vec<TrackScore>,
}

pub(crate) fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> anyhow::Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn reset_dir(dir: &Path) -> anyhow::Result<()> {
    if dir.exists() {
        fs::remove_dir_all(dir).with_context(|| format!("clearing {}", dir.display()))?;
    }
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

pub fn load_summary(paths: &VideoPaths) -> anyhow::Result<PoseSummary> {
    read_json(&paths.poses)
}

pub fn load_patient(paths: &VideoPaths) -> anyhow::Result<PatientRecord> {
    read_json(&paths.patient)
}

pub fn frame_store(entry: &VideoEntry, settings: &Settings) -> Result<FrameStore, PipelineError> {
    load_frames(&entry.frame_dir, settings.fps).map_err(|e| PipelineError::Input(format!("{}: {e}", entry.stem)))
}

/// Tracks rebuilt from a directory of tracked pose files.
pub fn load_tracks(dir: &Path, summary: &PoseSummary) -> anyhow::Result<(Vec<FramePose>, Vec<Track>)> {
    let frames = load_pose_files(dir)?.frames;
    let tracks = tracks_from_frames(&frames, summary.observed_frames());
    Ok((frames, tracks))
}

/// Resolves the configured target mode against the stored patient choice.
pub fn blur_spec(settings: &Settings, patient: &PatientRecord) -> anyhow::Result<BlurSpec> {
    let targets = match settings.targets {
        TargetMode::All => BlurTargets::AllPersons,
        TargetMode::Patient => BlurTargets::PatientOnly(
            patient
                .patient
                .ok_or_else(|| anyhow!("no patient identified; use all-person blurring"))?,
        ),
    };
    Ok(BlurSpec {
        targets,
        style: settings.style,
    })
}

fn standardize(entry: &VideoEntry, settings: &Settings, transcoder: &Transcoder) -> anyhow::Result<String> {
    if entry.frame_dir.join(frame_file_name(0)).is_file() {
        return Ok(format!("frames present in {}", entry.frame_dir.display()));
    }
    let Some(source) = &entry.source else {
        bail!("no frames in {} and no source video to decode", entry.frame_dir.display());
    };
    transcoder.decode(source, &entry.frame_dir, settings.target_height)?;
    Ok(format!("decoded {} into {}", source.display(), entry.frame_dir.display()))
}

fn load_poses(entry: &VideoEntry, settings: &Settings, paths: &VideoPaths) -> anyhow::Result<String> {
    let poses = load_pose_files(&entry.pose_dir)?;
    let store = load_frames(&entry.frame_dir, settings.fps)?;
    let gaps = poses.check_geometry(&store.geometry, !settings.allow_gaps)?;
    let summary = PoseSummary {
        geometry: store.geometry,
        pose_files: poses.frames.len(),
        people: poses.frames.iter().map(|f| f.people.len()).sum(),
        gaps,
    };
    fs::create_dir_all(&paths.dir)?;
    write_json(&paths.poses, &summary)?;
    let mut msg = format!(
        "{} pose files, {} frames {}x{}",
        summary.pose_files, summary.geometry.frame_count, summary.geometry.width, summary.geometry.height
    );
    if !summary.gaps.is_empty() {
        msg.push_str(&format!(", warning: frames without poses {:?}", summary.gaps));
    }
    Ok(msg)
}

fn track(entry: &VideoEntry, settings: &Settings, paths: &VideoPaths) -> anyhow::Result<String> {
    let summary = load_summary(paths)?;
    let poses = load_pose_files(&entry.pose_dir)?;
    let mut out = assign_ids(&poses.frames, &summary.geometry, settings.track_threshold)?;
    out.rebase_presence(summary.observed_frames());
    reset_dir(&paths.tracked)?;
    write_pose_files(&out.frames, &paths.tracked, &entry.stem)?;
    let report = TrackingSummary {
        threshold_fraction: settings.track_threshold,
        threshold_px: settings.track_threshold * summary.geometry.diagonal(),
        tracks: out
            .tracks
            .iter()
            .map(|t| TrackSummary {
                track_id: t.track_id,
                frames: t.frames.len(),
                first_frame: *t.frames.keys().next().unwrap(),
                last_frame: *t.frames.keys().next_back().unwrap(),
                presence_ratio: t.presence_ratio,
            })
            .collect(),
        new_tracks: out.new_tracks,
    };
    write_json(&paths.tracking, &report)?;
    Ok(format!("{} tracks", report.tracks.len()))
}

fn write_interpolation_report(path: &Path, bad: &[BadObservation]) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["frame", "track_id", "keypoint", "name", "confidence", "reason", "repair"])?;
    for b in bad {
        let enum_name = |v: serde_json::Value| v.as_str().unwrap_or_default().to_string();
        w.write_record([
            b.frame.to_string(),
            b.track_id.to_string(),
            b.keypoint.to_string(),
            body25::NAMES[b.keypoint].to_string(),
            b.confidence.to_string(),
            enum_name(serde_json::to_value(b.reason)?),
            enum_name(serde_json::to_value(b.repair)?),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn interpolate(entry: &VideoEntry, settings: &Settings, paths: &VideoPaths) -> anyhow::Result<String> {
    let summary = load_summary(paths)?;
    let (mut frames, tracks) = load_tracks(&paths.tracked, &summary)?;
    let (repaired, report) = interpolate_tracks(&tracks, settings.interpolation_scope, settings.confidence_threshold)?;
    apply_tracks_to_frames(&mut frames, &repaired);
    reset_dir(&paths.interpolated)?;
    write_pose_files(&frames, &paths.interpolated, &entry.stem)?;
    let mut bad = report.bad;
    bad.sort_by_key(|b| (b.frame, b.track_id, b.keypoint));
    write_interpolation_report(&paths.interpolation_report, &bad)?;
    let mut msg = format!("{} bad observations", bad.len());
    if !report.unrecoverable.is_empty() {
        msg.push_str(&format!(", unrecoverable (track, keypoint) {:?}", report.unrecoverable));
    }
    Ok(msg)
}

fn identify(settings: &Settings, paths: &VideoPaths) -> anyhow::Result<String> {
    let summary = load_summary(paths)?;
    let (_, tracks) = load_tracks(&paths.tracked, &summary)?;
    let record = match identify_patient(&tracks, &summary.geometry, settings.presence_threshold) {
        Ok(sel) => PatientRecord {
            patient: Some(sel.patient),
            presence_threshold: settings.presence_threshold,
            scores: sel.scores,
        },
        Err(PatientError::NoPatient { threshold, scores }) if settings.targets == TargetMode::All => PatientRecord {
            patient: None,
            presence_threshold: threshold,
            scores,
        },
        Err(e @ PatientError::NoPatient { .. }) => {
            write_json(
                &paths.patient.with_extension("failed.json"),
                &score_tracks(&tracks, &summary.geometry, settings.presence_threshold),
            )?;
            bail!("{e}");
        }
        Err(e) => bail!("{e}"),
    };
    write_json(&paths.patient, &record)?;
    Ok(match record.patient {
        Some(p) => format!("patient is track {p}"),
        None => "no patient; blurring all persons".into(),
    })
}

/// Face keypoints of a track that never reach the confidence threshold.
fn unreliable_face(t: &Track, thr: f64) -> Vec<usize> {
    body25::FACE
        .iter()
        .copied()
        .filter(|&k| !t.frames.values().any(|s| s.keypoints[k].c >= thr))
        .collect()
}

fn face_boxes(settings: &Settings, paths: &VideoPaths) -> anyhow::Result<String> {
    let summary = load_summary(paths)?;
    let patient = load_patient(paths)?;
    let spec = blur_spec(settings, &patient)?;
    let (_, tracks) = load_tracks(&paths.interpolated, &summary)?;
    for t in &tracks {
        let targeted = match spec.targets {
            BlurTargets::AllPersons => true,
            BlurTargets::PatientOnly(p) => p == t.track_id,
        };
        let missing = unreliable_face(t, settings.confidence_threshold);
        if targeted && !missing.is_empty() {
            bail!(
                "track {}: facial keypoints {:?} are never reliably observed, so its face cannot be located; add manual blur overrides and re-run",
                t.track_id,
                missing
            );
        }
    }
    let set = compute_face_boxes(&tracks, &summary.geometry);
    write_face_boxes(&paths.face_boxes, &set.boxes)?;
    let mut msg = format!("{} face boxes", set.boxes.len());
    if !set.skipped.is_empty() {
        msg.push_str(&format!(", {} (frame, track) without facial keypoints", set.skipped.len()));
    }
    Ok(msg)
}

fn render_step(entry: &VideoEntry, settings: &Settings, paths: &VideoPaths) -> anyhow::Result<String> {
    let patient = load_patient(paths)?;
    let spec = blur_spec(settings, &patient)?;
    let store = load_frames(&entry.frame_dir, settings.fps)?;
    let boxes = read_face_boxes(&paths.face_boxes)?;
    let overrides = OverrideSet::load(&paths.overrides)?;
    reset_dir(&paths.rendered)?;
    let report = render(&store, &boxes, &spec, &overrides, &paths.rendered)?;
    let mut msg = format!(
        "{} frames, {} regions, override revision {}",
        report.frames_written, report.regions_drawn, overrides.revision
    );
    if !report.degenerate.is_empty() {
        msg.push_str(&format!(", skipped degenerate {:?}", report.degenerate));
    }
    Ok(msg)
}

/// Runs one step for one video.
pub fn run_step(
    step: Step,
    entry: &VideoEntry,
    settings: &Settings,
    paths: &VideoPaths,
    transcoder: &Transcoder,
) -> anyhow::Result<String> {
    match step {
        Step::Standardize => standardize(entry, settings, transcoder),
        Step::LoadPoses => load_poses(entry, settings, paths),
        Step::Track => track(entry, settings, paths),
        Step::Interpolate => interpolate(entry, settings, paths),
        Step::IdentifyPatient => identify(settings, paths),
        Step::FaceBoxes => face_boxes(settings, paths),
        Step::Render => render_step(entry, settings, paths),
        Step::QualityCheck => bail!("quality check is completed by reviewer sign-off"),
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Last step to execute.
    pub until: Option<Step>,
    /// Restrict to these stems; empty means every video.
    pub only: Vec<String>,
    /// Ignore the ledger and start from the first step.
    pub restart: bool,
    pub transcoder: Transcoder,
}

#[derive(Debug)]
pub struct VideoReport {
    pub stem: String,
    pub executed: Vec<Step>,
    pub skipped: Vec<Step>,
    pub error: Option<PipelineError>,
}

#[derive(Debug, Default)]
pub struct RunReport {
    pub videos: Vec<VideoReport>,
}

impl RunReport {
    pub fn is_ok(&self) -> bool {
        self.videos.iter().all(|v| v.error.is_none())
    }

    /// The first failure, if any.
    pub fn into_result(self) -> Result<RunReport, PipelineError> {
        if self.is_ok() {
            return Ok(self);
        }
        let mut videos = self.videos;
        let i = videos.iter().position(|v| v.error.is_some()).unwrap();
        Err(videos.swap_remove(i).error.unwrap())
    }
}

/// Runs every pending step for each selected video, videos in parallel.
///
/// The ledger is updated and saved after each completed step.
pub fn run_pipeline(cfg: &mut ProjectConfig, opts: &RunOptions) -> Result<RunReport, PipelineError> {
    for stem in &opts.only {
        if cfg.video(stem).is_none() {
            return Err(PipelineError::Input(format!("unknown video '{stem}'")));
        }
    }
    let selected: Vec<VideoEntry> = cfg
        .videos
        .iter()
        .filter(|v| opts.only.is_empty() || opts.only.contains(&v.stem))
        .cloned()
        .collect();
    if opts.restart {
        for v in &selected {
            cfg.invalidate_from(&v.stem, Step::Standardize);
        }
        cfg.save()?;
    }
    let settings = cfg.settings.clone();
    let last = opts.until.unwrap_or(Step::Render);
    let shared = Mutex::new(cfg);

    let reports = std::thread::scope(|scope| {
        let handles: Vec<_> = selected
            .iter()
            .map(|entry| {
                let shared = &shared;
                let settings = &settings;
                scope.spawn(move || run_video(shared, entry, settings, last, &opts.transcoder))
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("video worker panicked")).collect()
    });
    Ok(RunReport { videos: reports })
}

fn run_video(
    shared: &Mutex<&mut ProjectConfig>,
    entry: &VideoEntry,
    settings: &Settings,
    last: Step,
    transcoder: &Transcoder,
) -> VideoReport {
    let mut report = VideoReport {
        stem: entry.stem.clone(),
        executed: Vec::new(),
        skipped: Vec::new(),
        error: None,
    };
    let paths = VideoPaths::new(&shared.lock().unwrap(), &entry.stem);
    let mut upstream_ran = false;
    for step in Step::PIPELINE.into_iter().filter(|s| *s <= last) {
        let done = shared.lock().unwrap().completed(&entry.stem, step);
        if done && !upstream_ran {
            report.skipped.push(step);
            continue;
        }
        if let Err(e) = fs::create_dir_all(&paths.dir).map_err(io_err(&paths.dir)) {
            report.error = Some(e);
            return report;
        }
        let result = run_step(step, entry, settings, &paths, transcoder);
        let mut cfg = shared.lock().unwrap();
        match result {
            Ok(msg) => {
                cfg.mark(&entry.stem, step);
                let saved = cfg.save().and_then(|_| cfg.log(Some(&entry.stem), &format!("{step}: {msg}")));
                if let Err(e) = saved {
                    report.error = Some(e);
                    return report;
                }
                report.executed.push(step);
                upstream_ran = true;
            }
            Err(e) => {
                let message = format!("{e:#}");
                cfg.invalidate_from(&entry.stem, step);
                let _ = cfg.save();
                let _ = cfg.log(Some(&entry.stem), &format!("{step} failed: {message}"));
                report.error = Some(PipelineError::StepFailed {
                    stem: entry.stem.clone(),
                    step,
                    message,
                    partial: paths.output_of(step).to_path_buf(),
                });
                return report;
            }
        }
    }
    if upstream_ran {
        // Anything downstream of a re-executed step is stale now.
        let mut cfg = shared.lock().unwrap();
        if let Some(next) = Step::PIPELINE.into_iter().chain([Step::QualityCheck]).find(|s| *s > last) {
            cfg.invalidate_from(&entry.stem, next);
            if let Err(e) = cfg.save() {
                report.error = Some(e);
            }
        }
    }
    report
}
