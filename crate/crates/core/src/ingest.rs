//! Reading and writing per-frame keypoint files and numbered frame images.
//!
//! Keypoint files follow the OpenPose layout (`<stem>_%012d_keypoints.json`,
//! a top-level `people` list holding flat 75-value `pose_keypoints_2d`
//! arrays). Written files add a `track_id` per person and, when present, the
//! list of interpolated keypoint indices.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use image::RgbImage;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{FramePose, Person, Skeleton, VideoGeometry, KEYPOINT_COUNT};

const KEYPOINT_SUFFIX: &str = "_keypoints.json";
const FORMAT_VERSION: f64 = 1.3;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}: parse error at line {line}, column {column} (byte offset {offset}): {message}", file.display())]
    Parse {
        file: PathBuf,
        line: usize,
        column: usize,
        offset: usize,
        message: String,
    },
    #[error("{}: person {person}: {message}", file.display())]
    Schema {
        file: PathBuf,
        person: usize,
        message: String,
    },
    #[error("no input files in {}", .0.display())]
    EmptyInput(PathBuf),
    #[error("{}: {message}", file.display())]
    FileName { file: PathBuf, message: String },
    #[error("missing frame indices {missing:?}")]
    Gap { missing: Vec<u64> },
    #[error("frame {frame} is {found_width}x{found_height}, expected {width}x{height}")]
    Geometry {
        frame: u64,
        width: u32,
        height: u32,
        found_width: u32,
        found_height: u32,
    },
    #[error("frame {frame}: {message}")]
    Image { frame: u64, message: String },
    #[error("contract violation: {0}")]
    ContractViolation(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> IngestError + '_ {
    move |source| IngestError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Deserialize)]
struct RawFile {
    people: Vec<RawPerson>,
}

#[derive(Debug, Deserialize)]
struct RawPerson {
    pose_keypoints_2d: Vec<f64>,
    #[serde(default)]
    track_id: Option<u32>,
    #[serde(default)]
    interpolated: Vec<usize>,
}

// Field order here is the on-disk key order.
#[derive(Serialize)]
struct OutFile<'a> {
    version: f64,
    people: Vec<OutPerson<'a>>,
}

#[derive(Serialize)]
struct OutPerson<'a> {
    person_id: [i32; 1],
    pose_keypoints_2d: &'a [f64],
    track_id: u32,
    #[serde(skip_serializing_if = "<[usize]>::is_empty")]
    interpolated: &'a [usize],
}

/// The keypoint files found in one directory, sorted by frame index.
#[derive(Debug, Clone, PartialEq)]
pub struct PoseFileSet {
    pub dir: PathBuf,
    pub stem: String,
    pub files: Vec<(u64, PathBuf)>,
}

impl PoseFileSet {
    /// One past the highest frame index present.
    pub fn frame_count(&self) -> u64 {
        self.files.last().map_or(0, |(i, _)| i + 1)
    }

    pub fn indices(&self) -> impl Iterator<Item = u64> + '_ {
        self.files.iter().map(|(i, _)| *i)
    }

    /// Frame indices in `0..frame_count` with no keypoint file.
    pub fn gaps(&self, frame_count: u64) -> Vec<u64> {
        let present: BTreeSet<u64> = self.indices().collect();
        (0..frame_count).filter(|i| !present.contains(i)).collect()
    }
}

#[derive(Debug, Clone)]
pub struct PoseLoad {
    pub files: PoseFileSet,
    pub frames: Vec<FramePose>,
    /// Missing indices between 0 and the last file found.
    pub gaps: Vec<u64>,
}

impl PoseLoad {
    /// Checks the loaded frames against decoded-frame geometry.
    ///
    /// Every pose index must be below `frame_count`. In strict mode any frame
    /// without a pose file is an error; otherwise the missing indices are
    /// returned for reporting.
    pub fn check_geometry(&self, geom: &VideoGeometry, strict: bool) -> Result<Vec<u64>, IngestError> {
        if let Some((i, path)) = self.files.files.iter().find(|(i, _)| *i >= geom.frame_count) {
            return Err(IngestError::FileName {
                file: path.clone(),
                message: format!("frame index {i} beyond video length {}", geom.frame_count),
            });
        }
        let gaps = self.files.gaps(geom.frame_count);
        if strict && !gaps.is_empty() {
            return Err(IngestError::Gap { missing: gaps });
        }
        Ok(gaps)
    }
}

pub fn keypoint_file_name(stem: &str, frame_index: u64) -> String {
    format!("{stem}_{frame_index:012}{KEYPOINT_SUFFIX}")
}

/// Splits `<stem>_<digits>_keypoints.json` into stem and frame index.
pub fn parse_keypoint_file_name(name: &str) -> Option<(&str, u64)> {
    let rest = name.strip_suffix(KEYPOINT_SUFFIX)?;
    let (stem, digits) = rest.rsplit_once('_')?;
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    Some((stem, digits.parse().ok()?))
}

pub fn scan_pose_dir(dir: &Path) -> Result<PoseFileSet, IngestError> {
    let mut files = Vec::new();
    let mut stem: Option<String> = None;
    for entry in fs::read_dir(dir).map_err(io_err(dir))? {
        let entry = entry.map_err(io_err(dir))?;
        let name = entry.file_name();
        let Some(name) = name.to_str() else { continue };
        let Some((file_stem, index)) = parse_keypoint_file_name(name) else {
            continue;
        };
        match &stem {
            None => stem = Some(file_stem.to_string()),
            Some(s) if s != file_stem => {
                return Err(IngestError::FileName {
                    file: entry.path(),
                    message: format!("stem '{file_stem}' differs from '{s}'"),
                })
            }
            Some(_) => {}
        }
        files.push((index, entry.path()));
    }
    let Some(stem) = stem else {
        return Err(IngestError::EmptyInput(dir.to_path_buf()));
    };
    files.sort();
    if let Some(w) = files.windows(2).find(|w| w[0].0 == w[1].0) {
        return Err(IngestError::FileName {
            file: w[1].1.clone(),
            message: format!("duplicate frame index {}", w[1].0),
        });
    }
    Ok(PoseFileSet {
        dir: dir.to_path_buf(),
        stem,
        files,
    })
}

fn byte_offset(text: &str, line: usize, column: usize) -> usize {
    let before: usize = text.split_inclusive('\n').take(line.saturating_sub(1)).map(str::len).sum();
    before + column.saturating_sub(1)
}

/// Decodes one keypoint file's contents.
pub fn parse_pose_file(path: &Path, frame_index: u64, text: &str) -> Result<FramePose, IngestError> {
    let raw: RawFile = serde_json::from_str(text).map_err(|e| IngestError::Parse {
        file: path.to_path_buf(),
        line: e.line(),
        column: e.column(),
        offset: byte_offset(text, e.line(), e.column()),
        message: e.to_string(),
    })?;
    let schema = |person: usize, message: String| IngestError::Schema {
        file: path.to_path_buf(),
        person,
        message,
    };
    let mut people = Vec::with_capacity(raw.people.len());
    for (n, p) in raw.people.into_iter().enumerate() {
        let mut skeleton = Skeleton::from_flat(&p.pose_keypoints_2d).ok_or_else(|| {
            schema(
                n,
                format!(
                    "pose_keypoints_2d has {} values, expected {}",
                    p.pose_keypoints_2d.len(),
                    KEYPOINT_COUNT * 3
                ),
            )
        })?;
        if let Some(k) = skeleton.keypoints.iter().position(|k| !(0.0..=1.0).contains(&k.c)) {
            return Err(schema(n, format!("keypoint {k} confidence {} outside [0, 1]", skeleton.keypoints[k].c)));
        }
        for &i in &p.interpolated {
            if i >= KEYPOINT_COUNT {
                return Err(schema(n, format!("interpolated index {i} out of range")));
            }
            skeleton.interpolated |= 1 << i;
        }
        people.push(Person {
            skeleton,
            track_id: p.track_id,
        });
    }
    Ok(FramePose::new(frame_index, people))
}

/// Loads every keypoint file in `dir`, one [`FramePose`] per file.
pub fn load_pose_files(dir: &Path) -> Result<PoseLoad, IngestError> {
    let files = scan_pose_dir(dir)?;
    let frames = files
        .files
        .par_iter()
        .map(|(index, path)| {
            let text = fs::read_to_string(path).map_err(io_err(path))?;
            parse_pose_file(path, *index, &text)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let gaps = files.gaps(files.frame_count());
    Ok(PoseLoad { files, frames, gaps })
}

/// Canonical serialized form of one frame. Fails if any person lacks a track id.
pub fn encode_pose_file(frame: &FramePose) -> Result<String, IngestError> {
    let flats: Vec<(Vec<f64>, Vec<usize>)> = frame
        .people
        .iter()
        .map(|p| (p.skeleton.to_flat(), p.skeleton.interpolated_indices()))
        .collect();
    let people = frame
        .people
        .iter()
        .zip(&flats)
        .enumerate()
        .map(|(n, (p, (flat, interp)))| {
            let track_id = p.track_id.ok_or_else(|| {
                IngestError::ContractViolation(format!("frame {} person {n} has no track_id", frame.frame_index))
            })?;
            Ok(OutPerson {
                person_id: [-1],
                pose_keypoints_2d: flat,
                track_id,
                interpolated: interp,
            })
        })
        .collect::<Result<Vec<_>, IngestError>>()?;
    let mut text = serde_json::to_string(&OutFile {
        version: FORMAT_VERSION,
        people,
    })
    .expect("pose file serialization is infallible");
    text.push('\n');
    Ok(text)
}

/// Writes tracked frames as keypoint files named after `stem`.
///
/// All frames are validated before anything is written.
pub fn write_pose_files(frames: &[FramePose], dir: &Path, stem: &str) -> Result<Vec<PathBuf>, IngestError> {
    let encoded = frames
        .iter()
        .map(|f| Ok((f.frame_index, encode_pose_file(f)?)))
        .collect::<Result<Vec<_>, IngestError>>()?;
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut paths = Vec::with_capacity(encoded.len());
    for (index, text) in encoded {
        let path = dir.join(keypoint_file_name(stem, index));
        fs::write(&path, text).map_err(io_err(&path))?;
        paths.push(path);
    }
    Ok(paths)
}

pub fn frame_file_name(index: u64) -> String {
    format!("frame_{index:06}.png")
}

fn parse_frame_file_name(name: &str) -> Option<u64> {
    let digits = name.strip_prefix("frame_")?.strip_suffix(".png")?;
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    digits.parse().ok()
}

/// A directory of `frame_%06d.png` images with uniform geometry.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameStore {
    pub dir: PathBuf,
    pub geometry: VideoGeometry,
}

impl FrameStore {
    pub fn frame_path(&self, index: u64) -> PathBuf {
        self.dir.join(frame_file_name(index))
    }

    pub fn contains(&self, index: u64) -> bool {
        index < self.geometry.frame_count
    }

    pub fn load(&self, index: u64) -> Result<RgbImage, IngestError> {
        if !self.contains(index) {
            return Err(IngestError::Gap { missing: vec![index] });
        }
        read_rgb(&self.frame_path(index), index)
    }
}

pub fn read_rgb(path: &Path, index: u64) -> Result<RgbImage, IngestError> {
    let img = image::open(path).map_err(|e| IngestError::Image {
        frame: index,
        message: e.to_string(),
    })?;
    Ok(img.into_rgb8())
}

/// Saves an RGB frame as PNG.
pub fn write_rgb(path: &Path, index: u64, img: &RgbImage) -> Result<(), IngestError> {
    img.save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| IngestError::Image {
            frame: index,
            message: e.to_string(),
        })
}

/// Indexes a numbered frame directory and validates uniform dimensions.
pub fn load_frames(dir: &Path, fps: f64) -> Result<FrameStore, IngestError> {
    let mut indices = Vec::new();
    for entry in fs::read_dir(dir).map_err(io_err(dir))? {
        let entry = entry.map_err(io_err(dir))?;
        if let Some(i) = entry.file_name().to_str().and_then(parse_frame_file_name) {
            indices.push(i);
        }
    }
    if indices.is_empty() {
        return Err(IngestError::EmptyInput(dir.to_path_buf()));
    }
    indices.sort_unstable();
    let count = indices.last().unwrap() + 1;
    if indices.len() as u64 != count {
        let present: BTreeSet<u64> = indices.iter().copied().collect();
        return Err(IngestError::Gap {
            missing: (0..count).filter(|i| !present.contains(i)).collect(),
        });
    }
    let dims = indices
        .par_iter()
        .map(|&i| {
            let path = dir.join(frame_file_name(i));
            image::image_dimensions(&path)
                .map(|d| (i, d))
                .map_err(|e| IngestError::Image {
                    frame: i,
                    message: e.to_string(),
                })
        })
        .collect::<Result<Vec<_>, _>>()?;
    let (width, height) = dims[0].1;
    if let Some(&(frame, (fw, fh))) = dims.iter().find(|(_, d)| *d != (width, height)) {
        return Err(IngestError::Geometry {
            frame,
            width,
            height,
            found_width: fw,
            found_height: fh,
        });
    }
    let geometry = VideoGeometry::new(width, height, count, fps).ok_or_else(|| {
        IngestError::ContractViolation(format!("invalid geometry {width}x{height} at {fps} fps"))
    })?;
    Ok(FrameStore {
        dir: dir.to_path_buf(),
        geometry,
    })
}
