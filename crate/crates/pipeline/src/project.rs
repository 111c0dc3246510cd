//! Project configuration, step ledger and the append-only project log.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use deidpose_core::blur::BlurStyle;
use deidpose_core::interpolation::InterpolationScope;
use deidpose_core::model::CONFIDENCE_THRESHOLD;
use deidpose_core::patient::DEFAULT_PRESENCE_THRESHOLD;
use deidpose_core::tracking::DEFAULT_THRESHOLD_FRACTION;
use serde::{Deserialize, Serialize};

use crate::error::{io_err, PipelineError};

pub const CONFIG_FILE: &str = "project.toml";
pub const LOG_FILE: &str = "project.log";

/// Pipeline steps in execution order. `QualityCheck` is only ever marked by
/// reviewer sign-off.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Step {
    Standardize,
    LoadPoses,
    Track,
    Interpolate,
    IdentifyPatient,
    FaceBoxes,
    Render,
    QualityCheck,
}

impl Step {
    /// The steps `run` executes.
    pub const PIPELINE: [Step; 7] = [
        Step::Standardize,
        Step::LoadPoses,
        Step::Track,
        Step::Interpolate,
        Step::IdentifyPatient,
        Step::FaceBoxes,
        Step::Render,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Step::Standardize => "standardize",
            Step::LoadPoses => "load_poses",
            Step::Track => "track",
            Step::Interpolate => "interpolate",
            Step::IdentifyPatient => "identify_patient",
            Step::FaceBoxes => "face_boxes",
            Step::Render => "render",
            Step::QualityCheck => "quality_check",
        }
    }
}

impl fmt::Display for Step {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Step {
    type Err = PipelineError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Step::PIPELINE
            .iter()
            .chain([Step::QualityCheck].iter())
            .find(|st| st.name() == s.replace('-', "_"))
            .copied()
            .ok_or_else(|| PipelineError::Input(format!("unknown step '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetMode {
    /// Blur only the identified patient.
    Patient,
    /// Blur every tracked person.
    All,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Settings {
    /// Tracking distance threshold as a fraction of the frame diagonal.
    pub track_threshold: f64,
    pub interpolation_scope: InterpolationScope,
    pub confidence_threshold: f64,
    pub presence_threshold: f64,
    pub targets: TargetMode,
    pub style: BlurStyle,
    /// Frame rate used when no source video is transcoded.
    pub fps: f64,
    /// Tolerate missing pose files; presence is then computed over the
    /// frames that have one.
    pub allow_gaps: bool,
    /// Output height for transcoding; width keeps the aspect ratio.
    pub target_height: Option<u32>,
}

impl Default for Settings {
    fn default() -> Self {
        Self {
            track_threshold: DEFAULT_THRESHOLD_FRACTION,
            interpolation_scope: InterpolationScope::FaceOnly,
            confidence_threshold: CONFIDENCE_THRESHOLD,
            presence_threshold: DEFAULT_PRESENCE_THRESHOLD,
            targets: TargetMode::Patient,
            style: BlurStyle::Solid,
            fps: 30.0,
            allow_gaps: false,
            target_height: None,
        }
    }
}

impl Settings {
    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |what: &str, v: f64| PipelineError::Input(format!("{what} {v} out of range"));
        if !(self.track_threshold > 0.0 && self.track_threshold <= 1.0) {
            return Err(bad("track threshold", self.track_threshold));
        }
        if !(self.confidence_threshold > 0.0 && self.confidence_threshold < 1.0) {
            return Err(bad("confidence threshold", self.confidence_threshold));
        }
        if !(self.presence_threshold > 0.0 && self.presence_threshold <= 1.0) {
            return Err(bad("presence threshold", self.presence_threshold));
        }
        if !(self.fps > 0.0 && self.fps.is_finite()) {
            return Err(bad("fps", self.fps));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoEntry {
    pub stem: String,
    /// Original recording, decoded by the standardize step when the frame
    /// directory is empty.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<PathBuf>,
    pub pose_dir: PathBuf,
    pub frame_dir: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metadata: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct VideoLedger {
    pub completed: BTreeSet<Step>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectConfig {
    pub name: String,
    pub settings: Settings,
    pub videos: Vec<VideoEntry>,
    #[serde(default)]
    pub ledger: BTreeMap<String, VideoLedger>,
    /// Directory holding the config file; not stored in it.
    #[serde(skip)]
    pub dir: PathBuf,
}

/// A video to add when creating a project.
#[derive(Debug, Clone, PartialEq)]
pub struct NewVideo {
    pub stem: String,
    pub source: Option<PathBuf>,
    pub pose_dir: PathBuf,
    /// Defaults to `videos/<stem>/frames` inside the project.
    pub frame_dir: Option<PathBuf>,
}

fn check_name(kind: &str, s: &str) -> Result<(), PipelineError> {
    let ok = !s.is_empty()
        && s != "."
        && s != ".."
        && s.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'));
    if ok {
        Ok(())
    } else {
        Err(PipelineError::Input(format!("{kind} '{s}' must be non-empty ASCII letters, digits, '-', '_' or '.'")))
    }
}

/// Creates `<root>/<name>/project.toml`, linking each video to the sidecar
/// whose file stem equals the video stem.
pub fn create_project(
    root: &Path,
    name: &str,
    videos: Vec<NewVideo>,
    sidecars: &[PathBuf],
    settings: Settings,
) -> Result<ProjectConfig, PipelineError> {
    check_name("project name", name)?;
    settings.validate()?;
    if videos.is_empty() {
        return Err(PipelineError::Input("a project needs at least one video".into()));
    }
    let mut stems = BTreeSet::new();
    for v in &videos {
        check_name("video stem", &v.stem)?;
        if !stems.insert(v.stem.clone()) {
            return Err(PipelineError::Input(format!("duplicate video stem '{}'", v.stem)));
        }
    }
    let dir = root.join(name);
    let path = dir.join(CONFIG_FILE);
    if path.exists() {
        return Err(PipelineError::Conflict {
            name: name.to_string(),
            path,
        });
    }
    let entries = videos
        .into_iter()
        .map(|v| {
            let metadata = sidecars
                .iter()
                .find(|p| p.file_stem().and_then(|s| s.to_str()) == Some(v.stem.as_str()))
                .cloned();
            VideoEntry {
                frame_dir: v.frame_dir.unwrap_or_else(|| dir.join("videos").join(&v.stem).join("frames")),
                stem: v.stem,
                source: v.source,
                pose_dir: v.pose_dir,
                metadata,
            }
        })
        .collect();
    let cfg = ProjectConfig {
        name: name.to_string(),
        settings,
        videos: entries,
        ledger: BTreeMap::new(),
        dir,
    };
    fs::create_dir_all(&cfg.dir).map_err(io_err(&cfg.dir))?;
    cfg.save()?;
    cfg.log(None, "project created")?;
    for v in &cfg.videos {
        let link = match &v.metadata {
            Some(m) => format!("metadata linked: {}", m.display()),
            None => "no metadata".to_string(),
        };
        cfg.log(Some(&v.stem), &link)?;
    }
    Ok(cfg)
}

/// Loads a project from its config file or from the directory containing it.
pub fn load_project(path: &Path) -> Result<ProjectConfig, PipelineError> {
    let file = if path.is_dir() { path.join(CONFIG_FILE) } else { path.to_path_buf() };
    if !file.is_file() {
        return Err(PipelineError::NotFound(file));
    }
    let text = fs::read_to_string(&file).map_err(io_err(&file))?;
    let mut cfg: ProjectConfig = toml::from_str(&text).map_err(|e| PipelineError::Config {
        path: file.clone(),
        message: e.to_string(),
    })?;
    cfg.dir = file.parent().map(Path::to_path_buf).unwrap_or_default();
    cfg.settings.validate()?;
    Ok(cfg)
}

impl ProjectConfig {
    pub fn config_path(&self) -> PathBuf {
        self.dir.join(CONFIG_FILE)
    }

    pub fn log_path(&self) -> PathBuf {
        self.dir.join(LOG_FILE)
    }

    pub fn video(&self, stem: &str) -> Option<&VideoEntry> {
        self.videos.iter().find(|v| v.stem == stem)
    }

    pub fn completed(&self, stem: &str, step: Step) -> bool {
        self.ledger.get(stem).is_some_and(|l| l.completed.contains(&step))
    }

    pub fn mark(&mut self, stem: &str, step: Step) {
        self.ledger.entry(stem.to_string()).or_default().completed.insert(step);
    }

    /// Clears `step` and every later step for `stem`.
    pub fn invalidate_from(&mut self, stem: &str, step: Step) {
        if let Some(l) = self.ledger.get_mut(stem) {
            l.completed.retain(|s| *s < step);
        }
    }

    /// Writes the config atomically.
    pub fn save(&self) -> Result<(), PipelineError> {
        let path = self.config_path();
        let text = toml::to_string_pretty(self).map_err(|e| PipelineError::Config {
            path: path.clone(),
            message: e.to_string(),
        })?;
        let tmp = self.dir.join(format!("{CONFIG_FILE}.tmp"));
        fs::write(&tmp, text).map_err(io_err(&tmp))?;
        fs::rename(&tmp, &path).map_err(io_err(&path))
    }

    /// Appends one timestamped line to the project log.
    pub fn log(&self, stem: Option<&str>, message: &str) -> Result<(), PipelineError> {
        let path = self.log_path();
        let mut f = OpenOptions::new().create(true).append(true).open(&path).map_err(io_err(&path))?;
        let ts = chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true);
        let line = match stem {
            Some(s) => format!("{ts} [{s}] {message}\n"),
            None => format!("{ts} {message}\n"),
        };
        f.write_all(line.as_bytes()).map_err(io_err(&path))
    }
}
