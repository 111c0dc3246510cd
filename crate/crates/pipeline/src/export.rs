//! Copying project data out of the project tree.
//!
//! Every request is checked before anything is written, so a refused export
//! leaves the destination untouched.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use deidpose_core::ingest::{load_pose_files, write_pose_files};
use deidpose_core::model::{FramePose, Keypoint, Person, Skeleton, KEYPOINT_COUNT};

use crate::error::{io_err, PipelineError};
use crate::pipeline::VideoPaths;
use crate::project::{ProjectConfig, Step, CONFIG_FILE, LOG_FILE};
use crate::transcode::Transcoder;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum KeypointFormat {
    /// Per-frame pose files.
    Json,
    /// One table per video.
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum ExportItem {
    BlurredVideo,
    Backup,
    Keypoints(KeypointFormat),
}

#[derive(Debug, Clone, Default)]
pub struct ExportOptions {
    pub skip_quality_check: bool,
    /// Encode blurred frames to `<stem>.mp4` instead of copying PNGs.
    pub encode: bool,
    pub transcoder: Transcoder,
}

/// `frame,track_id,kp0_x,kp0_y,kp0_c,...,kp24_c`
pub fn keypoint_csv_header() -> Vec<String> {
    let mut h = vec!["frame".to_string(), "track_id".to_string()];
    for k in 0..KEYPOINT_COUNT {
        for axis in ["x", "y", "c"] {
            h.push(format!("kp{k}_{axis}"));
        }
    }
    h
}

/// One row per person per frame.
pub fn write_keypoint_csv(path: &Path, frames: &[FramePose]) -> Result<(), PipelineError> {
    let csv_err = |e: csv::Error| PipelineError::Input(format!("{}: {e}", path.display()));
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(keypoint_csv_header()).map_err(csv_err)?;
    for f in frames {
        for p in &f.people {
            let mut row = vec![f.frame_index.to_string(), p.track_id.map(|t| t.to_string()).unwrap_or_default()];
            row.extend(p.skeleton.to_flat().iter().map(f64::to_string));
            w.write_record(&row).map_err(csv_err)?;
        }
    }
    w.flush().map_err(io_err(path))
}

/// Reads a keypoint table back into frames; frames with no rows are absent.
pub fn read_keypoint_csv(path: &Path) -> Result<Vec<FramePose>, PipelineError> {
    let bad = |row: usize, msg: &str| PipelineError::Input(format!("{} row {row}: {msg}", path.display()));
    let mut r = csv::Reader::from_path(path).map_err(|e| PipelineError::Input(format!("{}: {e}", path.display())))?;
    let header = r.headers().map_err(|e| PipelineError::Input(format!("{}: {e}", path.display())))?;
    if header.iter().ne(keypoint_csv_header().iter().map(String::as_str)) {
        return Err(bad(0, "unexpected header"));
    }
    let mut frames: BTreeMap<u64, Vec<Person>> = BTreeMap::new();
    for (i, rec) in r.records().enumerate() {
        let row = i + 1;
        let rec = rec.map_err(|e| bad(row, &e.to_string()))?;
        let frame: u64 = rec[0].parse().map_err(|_| bad(row, "bad frame"))?;
        let track_id = match &rec[1] {
            "" => None,
            s => Some(s.parse().map_err(|_| bad(row, "bad track_id"))?),
        };
        let values = rec
            .iter()
            .skip(2)
            .map(|v| v.parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|_| bad(row, "bad number"))?;
        let skeleton = Skeleton::from_flat(&values).ok_or_else(|| bad(row, "wrong number of values"))?;
        frames.entry(frame).or_default().push(Person { skeleton, track_id });
    }
    Ok(frames.into_iter().map(|(i, people)| FramePose::new(i, people)).collect())
}

/// Keypoint values only, for comparing exports that differ in metadata.
pub fn keypoint_values(frames: &[FramePose]) -> Vec<(u64, Option<u32>, Vec<Keypoint>)> {
    frames
        .iter()
        .flat_map(|f| f.people.iter().map(move |p| (f.frame_index, p.track_id, p.skeleton.keypoints.to_vec())))
        .collect()
}

fn copy_dir(src: &Path, dst: &Path, out: &mut Vec<PathBuf>) -> Result<(), PipelineError> {
    fs::create_dir_all(dst).map_err(io_err(dst))?;
    let mut entries: Vec<_> = fs::read_dir(src)
        .map_err(io_err(src))?
        .collect::<Result<Vec<_>, _>>()
        .map_err(io_err(src))?;
    entries.sort_by_key(|e| e.file_name());
    for e in entries {
        if e.path().is_file() {
            let to = dst.join(e.file_name());
            fs::copy(e.path(), &to).map_err(io_err(&to))?;
            out.push(to);
        }
    }
    Ok(())
}

fn copy_file(src: &Path, dst: &Path, out: &mut Vec<PathBuf>) -> Result<(), PipelineError> {
    if src.is_file() {
        if let Some(dir) = dst.parent() {
            fs::create_dir_all(dir).map_err(io_err(dir))?;
        }
        fs::copy(src, dst).map_err(io_err(dst))?;
        out.push(dst.to_path_buf());
    }
    Ok(())
}

fn check(cfg: &ProjectConfig, item: ExportItem, opts: &ExportOptions) -> Result<(), PipelineError> {
    for v in &cfg.videos {
        let stem = v.stem.clone();
        match item {
            ExportItem::BlurredVideo => {
                if !cfg.completed(&stem, Step::Render) {
                    return Err(PipelineError::NotReady {
                        stem,
                        what: "blurred video".into(),
                        needs: Step::Render,
                    });
                }
                if !opts.skip_quality_check && !cfg.completed(&stem, Step::QualityCheck) {
                    return Err(PipelineError::PrivacyGuard { stem });
                }
            }
            ExportItem::Keypoints(_) => {
                if !cfg.completed(&stem, Step::Interpolate) {
                    return Err(PipelineError::NotReady {
                        stem,
                        what: "keypoints".into(),
                        needs: Step::Interpolate,
                    });
                }
            }
            ExportItem::Backup => {}
        }
    }
    Ok(())
}

/// Exports the requested items for every video in the project into `dest`.
pub fn export(
    cfg: &ProjectConfig,
    what: &[ExportItem],
    dest: &Path,
    opts: &ExportOptions,
) -> Result<Vec<PathBuf>, PipelineError> {
    for item in what {
        check(cfg, *item, opts)?;
    }
    let mut out = Vec::new();
    fs::create_dir_all(dest).map_err(io_err(dest))?;
    for item in what {
        match item {
            ExportItem::BlurredVideo => {
                for v in &cfg.videos {
                    let paths = VideoPaths::new(cfg, &v.stem);
                    if opts.skip_quality_check && !cfg.completed(&v.stem, Step::QualityCheck) {
                        cfg.log(Some(&v.stem), "exporting blurred video without quality-check sign-off")?;
                    }
                    if opts.encode {
                        let target = dest.join(format!("{}.mp4", v.stem));
                        opts.transcoder.encode(&paths.rendered, cfg.settings.fps, &target)?;
                        out.push(target);
                    } else {
                        copy_dir(&paths.rendered, &dest.join(&v.stem).join("blurred"), &mut out)?;
                    }
                    cfg.log(Some(&v.stem), &format!("exported blurred video to {}", dest.display()))?;
                }
            }
            ExportItem::Backup => {
                let root = dest.join(format!("{}_backup", cfg.name));
                copy_file(&cfg.dir.join(CONFIG_FILE), &root.join(CONFIG_FILE), &mut out)?;
                copy_file(&cfg.dir.join(LOG_FILE), &root.join(LOG_FILE), &mut out)?;
                for v in &cfg.videos {
                    let paths = VideoPaths::new(cfg, &v.stem);
                    let vdir = root.join("videos").join(&v.stem);
                    for f in [&paths.poses, &paths.tracking, &paths.patient, &paths.face_boxes, &paths.overrides] {
                        copy_file(f, &vdir.join(f.file_name().unwrap()), &mut out)?;
                    }
                }
            }
            ExportItem::Keypoints(fmt) => {
                for v in &cfg.videos {
                    let paths = VideoPaths::new(cfg, &v.stem);
                    for (variant, dir) in [("raw", &paths.tracked), ("interpolated", &paths.interpolated)] {
                        let load = load_pose_files(dir).map_err(|e| PipelineError::Input(e.to_string()))?;
                        match fmt {
                            KeypointFormat::Json => {
                                let target = dest.join(&v.stem).join(format!("keypoints_{variant}"));
                                fs::create_dir_all(&target).map_err(io_err(&target))?;
                                let written = write_pose_files(&load.frames, &target, &v.stem)
                                    .map_err(|e| PipelineError::Input(e.to_string()))?;
                                out.extend(written);
                            }
                            KeypointFormat::Csv => {
                                let target = dest.join(format!("{}_{variant}.csv", v.stem));
                                write_keypoint_csv(&target, &load.frames)?;
                                out.push(target);
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}
