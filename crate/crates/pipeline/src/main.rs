use std::fs;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use deidpose::error::PipelineError;
use deidpose::export::{export, ExportItem, ExportOptions, KeypointFormat};
use deidpose::fixture::{write_fixture, FixtureSpec};
use deidpose::pipeline::{run_pipeline, RunOptions, RunReport, VideoPaths};
use deidpose::project::{create_project, load_project, NewVideo, ProjectConfig, Settings, Step, TargetMode};
use deidpose::review;
use deidpose_core::blur::{read_face_boxes, BlurStyle};
use deidpose_core::eval::{evaluate, face_boxes_as_detections, read_detections, read_ground_truth, write_pr_curve};
use deidpose_core::ingest::{load_pose_files, write_pose_files};
use deidpose_core::interpolation::{interpolate_tracks, InterpolationScope};
use deidpose_core::model::{apply_tracks_to_frames, tracks_from_frames, VideoGeometry};
use deidpose_core::overrides::{Override, OverrideSet};
use deidpose_core::patient::identify_patient;
use deidpose_core::tracking::assign_ids;

#[derive(Parser)]
#[command(name = "deidpose", version, about = "De-identify clinical pose videos and export kinematics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Create a project.
    Init(InitArgs),
    /// Run pending pipeline steps for every video.
    Run(RunArgs),
    /// Assign track ids.
    Track(TrackArgs),
    /// Repair unreliable keypoints.
    Interpolate(InterpolateArgs),
    /// Identify the patient track.
    Identify(IdentifyArgs),
    /// Set blur targets and style, import overrides, and render.
    Blur(BlurArgs),
    /// Score detections against ground truth.
    Eval(EvalArgs),
    /// Copy project data to an external directory.
    Export(ExportArgs),
    /// Start the quality-check review service.
    Review(ReviewArgs),
    /// Write synthetic demo inputs.
    Fixture(FixtureArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Targets {
    Patient,
    All,
}

#[derive(Clone, Copy, ValueEnum)]
enum Style {
    Solid,
    Gaussian,
}

#[derive(Clone, Copy, ValueEnum)]
enum Scope {
    Face,
    Body,
}

#[derive(Clone, Copy, ValueEnum)]
enum What {
    Blurred,
    Backup,
    KeypointsJson,
    KeypointsCsv,
}

impl From<Targets> for TargetMode {
    fn from(t: Targets) -> Self {
        match t {
            Targets::Patient => TargetMode::Patient,
            Targets::All => TargetMode::All,
        }
    }
}

impl From<Style> for BlurStyle {
    fn from(s: Style) -> Self {
        match s {
            Style::Solid => BlurStyle::Solid,
            Style::Gaussian => BlurStyle::Gaussian,
        }
    }
}

impl From<Scope> for InterpolationScope {
    fn from(s: Scope) -> Self {
        match s {
            Scope::Face => InterpolationScope::FaceOnly,
            Scope::Body => InterpolationScope::WholeBody,
        }
    }
}

#[derive(Args)]
struct InitArgs {
    #[arg(long)]
    name: String,
    /// Directory that will contain the project directory.
    #[arg(long, default_value = ".")]
    root: PathBuf,
    /// Directory with one pose sub-directory per video stem.
    #[arg(long)]
    pose_root: PathBuf,
    /// Directory with one decoded-frame sub-directory per video stem.
    #[arg(long)]
    frame_root: Option<PathBuf>,
    /// Directory of source recordings named `<stem>.<ext>`.
    #[arg(long)]
    source_dir: Option<PathBuf>,
    /// Directory of metadata sidecars named `<stem>.<ext>`.
    #[arg(long)]
    metadata_dir: Option<PathBuf>,
    /// Video stems; defaults to every sub-directory of --pose-root.
    #[arg(long = "video")]
    videos: Vec<String>,
    #[arg(long, value_enum, default_value = "patient")]
    targets: Targets,
    #[arg(long, value_enum, default_value = "solid")]
    style: Style,
    #[arg(long, value_enum, default_value = "face")]
    scope: Scope,
    #[arg(long, default_value_t = 0.15)]
    track_threshold: f64,
    #[arg(long, default_value_t = 0.5)]
    confidence: f64,
    #[arg(long, default_value_t = 0.8)]
    presence: f64,
    #[arg(long, default_value_t = 30.0)]
    fps: f64,
    #[arg(long)]
    allow_gaps: bool,
    #[arg(long)]
    target_height: Option<u32>,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Stop after this step.
    #[arg(long)]
    until: Option<Step>,
    #[arg(long = "video")]
    videos: Vec<String>,
    /// Ignore the ledger and run every step again.
    #[arg(long)]
    restart: bool,
}

#[derive(Args)]
struct Geometry {
    /// Decoded frames, used for the frame size.
    #[arg(long)]
    frames_dir: Option<PathBuf>,
    #[arg(long)]
    width: Option<u32>,
    #[arg(long)]
    height: Option<u32>,
}

#[derive(Args)]
struct TrackArgs {
    #[arg(long, conflicts_with_all = ["pose_dir", "out_dir"])]
    config: Option<PathBuf>,
    #[arg(long, requires = "out_dir")]
    pose_dir: Option<PathBuf>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[command(flatten)]
    geometry: Geometry,
    /// Fraction of the frame diagonal.
    #[arg(long)]
    threshold: Option<f64>,
}

#[derive(Args)]
struct InterpolateArgs {
    #[arg(long, conflicts_with_all = ["pose_dir", "out_dir"])]
    config: Option<PathBuf>,
    #[arg(long, requires = "out_dir")]
    pose_dir: Option<PathBuf>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long, value_enum)]
    scope: Option<Scope>,
    /// Confidence below which a keypoint is repaired.
    #[arg(long)]
    threshold: Option<f64>,
}

#[derive(Args)]
struct IdentifyArgs {
    #[arg(long, conflicts_with = "pose_dir")]
    config: Option<PathBuf>,
    /// Directory of tracked pose files.
    #[arg(long)]
    pose_dir: Option<PathBuf>,
    #[command(flatten)]
    geometry: Geometry,
    #[arg(long)]
    presence: Option<f64>,
}

#[derive(Args)]
struct BlurArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long, value_enum)]
    targets: Option<Targets>,
    #[arg(long, value_enum)]
    style: Option<Style>,
    /// JSON list of overrides; each is routed to the video named by its stem.
    #[arg(long)]
    overrides: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    /// Ground truth CSV: frame,x,y,w,h.
    #[arg(long)]
    gt: PathBuf,
    /// Detection CSV: frame,x,y,w,h,confidence.
    #[arg(long, conflicts_with = "config")]
    det: Option<PathBuf>,
    /// Evaluate this project's face boxes instead of a detection file.
    #[arg(long, requires = "video")]
    config: Option<PathBuf>,
    #[arg(long)]
    video: Option<String>,
    #[arg(long, default_value_t = 0.5)]
    iou: f64,
    #[arg(long, default_value = "eval_out")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct ExportArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long, value_enum, value_delimiter = ',', required = true)]
    what: Vec<What>,
    #[arg(long)]
    dest: PathBuf,
    /// Export rendered video without quality-check sign-off.
    #[arg(long)]
    skip_quality_check: bool,
    /// Encode blurred frames to MP4 with ffmpeg.
    #[arg(long)]
    encode: bool,
}

#[derive(Args)]
struct ReviewArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value = review::DEFAULT_BIND)]
    bind: SocketAddr,
    /// Static assets of the review client.
    #[arg(long)]
    ui_dir: Option<PathBuf>,
    #[arg(long)]
    allow_remote: bool,
}

#[derive(Args)]
struct FixtureArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "demo")]
    stem: String,
    #[arg(long, default_value_t = 60)]
    frames: u64,
    #[arg(long, default_value_t = 7)]
    seed: u64,
}

fn input(e: impl std::fmt::Display) -> PipelineError {
    PipelineError::Input(e.to_string())
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<(), PipelineError> {
    let text = serde_json::to_string_pretty(value).map_err(input)? + "\n";
    fs::write(path, text).map_err(|source| PipelineError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn print_json<T: serde::Serialize>(value: &T) {
    println!("{}", serde_json::to_string_pretty(value).expect("serializable"));
}

fn geometry(g: &Geometry, frame_count: u64) -> Result<VideoGeometry, PipelineError> {
    let (w, h) = match (&g.frames_dir, g.width, g.height) {
        (Some(dir), _, _) => {
            let store = deidpose_core::ingest::load_frames(dir, 30.0).map_err(input)?;
            (store.geometry.width, store.geometry.height)
        }
        (None, Some(w), Some(h)) => (w, h),
        _ => return Err(input("give --frames-dir or both --width and --height")),
    };
    VideoGeometry::new(w, h, frame_count, 30.0).ok_or_else(|| input("frame size must be positive"))
}

fn report_run(report: &RunReport) {
    for v in &report.videos {
        let names = |steps: &[Step]| steps.iter().map(Step::name).collect::<Vec<_>>().join(", ");
        println!("{}: ran [{}], already done [{}]", v.stem, names(&v.executed), names(&v.skipped));
        if let Some(e) = &v.error {
            eprintln!("{}: {e}", v.stem);
        }
    }
}

fn run_until(cfg: &mut ProjectConfig, until: Step) -> Result<(), PipelineError> {
    let report = run_pipeline(
        cfg,
        &RunOptions {
            until: Some(until),
            ..Default::default()
        },
    )?;
    report_run(&report);
    report.into_result().map(|_| ())
}

/// Applies a settings change, invalidating the ledger from `from` onward
/// when anything actually changed.
fn update_settings(cfg: &mut ProjectConfig, from: Step, f: impl FnOnce(&mut Settings)) -> Result<(), PipelineError> {
    let before = cfg.settings.clone();
    f(&mut cfg.settings);
    cfg.settings.validate()?;
    if cfg.settings != before {
        let stems: Vec<String> = cfg.videos.iter().map(|v| v.stem.clone()).collect();
        for s in &stems {
            cfg.invalidate_from(s, from);
        }
        cfg.save()?;
        cfg.log(None, &format!("settings changed; steps from {from} will re-run"))?;
    }
    Ok(())
}

fn list_files(dir: &Path) -> Result<Vec<PathBuf>, PipelineError> {
    let mut out: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|source| PipelineError::Io {
            path: dir.to_path_buf(),
            source,
        })?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .collect();
    out.sort();
    Ok(out)
}

fn init(a: InitArgs) -> Result<(), PipelineError> {
    let stems = if a.videos.is_empty() {
        list_files(&a.pose_root)?
            .into_iter()
            .filter(|p| p.is_dir())
            .filter_map(|p| p.file_name().and_then(|n| n.to_str()).map(String::from))
            .collect()
    } else {
        a.videos.clone()
    };
    let sources = match &a.source_dir {
        Some(d) => list_files(d)?,
        None => Vec::new(),
    };
    let sidecars = match &a.metadata_dir {
        Some(d) => list_files(d)?,
        None => Vec::new(),
    };
    let videos = stems
        .into_iter()
        .map(|stem| NewVideo {
            source: sources
                .iter()
                .find(|p| p.file_stem().and_then(|s| s.to_str()) == Some(stem.as_str()))
                .cloned(),
            pose_dir: a.pose_root.join(&stem),
            frame_dir: a.frame_root.as_ref().map(|r| r.join(&stem)),
            stem,
        })
        .collect();
    let settings = Settings {
        track_threshold: a.track_threshold,
        interpolation_scope: a.scope.into(),
        confidence_threshold: a.confidence,
        presence_threshold: a.presence,
        targets: a.targets.into(),
        style: a.style.into(),
        fps: a.fps,
        allow_gaps: a.allow_gaps,
        target_height: a.target_height,
    };
    let cfg = create_project(&a.root, &a.name, videos, &sidecars, settings)?;
    for v in &cfg.videos {
        let meta = v.metadata.as_ref().map_or("none".to_string(), |m| m.display().to_string());
        println!("{}: poses {}, metadata {meta}", v.stem, v.pose_dir.display());
    }
    println!("{}", cfg.config_path().display());
    Ok(())
}

fn track(a: TrackArgs) -> Result<(), PipelineError> {
    if let Some(config) = a.config {
        let mut cfg = load_project(&config)?;
        if let Some(t) = a.threshold {
            update_settings(&mut cfg, Step::Track, |s| s.track_threshold = t)?;
        }
        return run_until(&mut cfg, Step::Track);
    }
    let (Some(pose_dir), Some(out_dir)) = (a.pose_dir, a.out_dir) else {
        return Err(input("give --config or --pose-dir with --out-dir"));
    };
    let load = load_pose_files(&pose_dir).map_err(input)?;
    let geom = geometry(&a.geometry, load.files.frame_count())?;
    let out = assign_ids(&load.frames, &geom, a.threshold.unwrap_or(0.15)).map_err(input)?;
    fs::create_dir_all(&out_dir).map_err(input)?;
    write_pose_files(&out.frames, &out_dir, &load.files.stem).map_err(input)?;
    write_json(&out_dir.join("new_tracks.json"), &out.new_tracks)?;
    for t in &out.tracks {
        println!("track {}: {} frames, presence {:.3}", t.track_id, t.frames.len(), t.presence_ratio);
    }
    Ok(())
}

fn interpolate(a: InterpolateArgs) -> Result<(), PipelineError> {
    if let Some(config) = a.config {
        let mut cfg = load_project(&config)?;
        update_settings(&mut cfg, Step::Interpolate, |s| {
            if let Some(scope) = a.scope {
                s.interpolation_scope = scope.into();
            }
            if let Some(t) = a.threshold {
                s.confidence_threshold = t;
            }
        })?;
        return run_until(&mut cfg, Step::Interpolate);
    }
    let (Some(pose_dir), Some(out_dir)) = (a.pose_dir, a.out_dir) else {
        return Err(input("give --config or --pose-dir with --out-dir"));
    };
    let load = load_pose_files(&pose_dir).map_err(input)?;
    let mut frames = load.frames;
    let tracks = tracks_from_frames(&frames, load.files.frame_count());
    if tracks.is_empty() {
        return Err(input("pose files carry no track ids; run `track` first"));
    }
    let scope = a.scope.unwrap_or(Scope::Face).into();
    let (repaired, report) = interpolate_tracks(&tracks, scope, a.threshold.unwrap_or(0.5)).map_err(input)?;
    apply_tracks_to_frames(&mut frames, &repaired);
    fs::create_dir_all(&out_dir).map_err(input)?;
    write_pose_files(&frames, &out_dir, &load.files.stem).map_err(input)?;
    write_json(&out_dir.join("bad_observations.json"), &report.bad)?;
    println!("{} bad observations, {} unrecoverable keypoints", report.bad.len(), report.unrecoverable.len());
    Ok(())
}

fn identify(a: IdentifyArgs) -> Result<(), PipelineError> {
    if let Some(config) = a.config {
        let mut cfg = load_project(&config)?;
        if let Some(p) = a.presence {
            update_settings(&mut cfg, Step::IdentifyPatient, |s| s.presence_threshold = p)?;
        }
        run_until(&mut cfg, Step::IdentifyPatient)?;
        for v in &cfg.videos {
            let record = deidpose::pipeline::load_patient(&VideoPaths::new(&cfg, &v.stem)).map_err(input)?;
            println!("{}: {}", v.stem, serde_json::to_string(&record).map_err(input)?);
        }
        return Ok(());
    }
    let Some(pose_dir) = a.pose_dir else {
        return Err(input("give --config or --pose-dir"));
    };
    let load = load_pose_files(&pose_dir).map_err(input)?;
    let geom = geometry(&a.geometry, load.files.frame_count())?;
    let tracks = tracks_from_frames(&load.frames, geom.frame_count);
    if tracks.is_empty() {
        return Err(input("pose files carry no track ids; run `track` first"));
    }
    match identify_patient(&tracks, &geom, a.presence.unwrap_or(0.8)) {
        Ok(sel) => {
            print_json(&sel);
            Ok(())
        }
        Err(deidpose_core::patient::PatientError::NoPatient { threshold, scores }) => {
            print_json(&scores);
            Err(PipelineError::StepFailed {
                stem: load.files.stem,
                step: Step::IdentifyPatient,
                message: format!("no track present in {:.0}% of frames; use --targets all", threshold * 100.0),
                partial: pose_dir,
            })
        }
        Err(e) => Err(input(e)),
    }
}

fn blur(a: BlurArgs) -> Result<(), PipelineError> {
    let mut cfg = load_project(&a.config)?;
    if let Some(t) = a.targets {
        update_settings(&mut cfg, Step::IdentifyPatient, |s| s.targets = t.into())?;
    }
    if let Some(st) = a.style {
        update_settings(&mut cfg, Step::Render, |s| s.style = st.into())?;
    }
    if let Some(path) = a.overrides {
        let text = fs::read_to_string(&path).map_err(input)?;
        let list: Vec<Override> = serde_json::from_str(&text).map_err(|e| input(format!("{}: {e}", path.display())))?;
        let stems: Vec<String> = cfg.videos.iter().map(|v| v.stem.clone()).collect();
        if let Some(o) = list.iter().find(|o| !stems.contains(&o.stem)) {
            return Err(input(format!("override {} names unknown video '{}'", o.id, o.stem)));
        }
        for stem in &stems {
            let paths = VideoPaths::new(&cfg, stem);
            let mut set = OverrideSet::load(&paths.overrides).map_err(input)?;
            set.replace(list.iter().filter(|o| &o.stem == stem).cloned().collect());
            set.save(&paths.overrides).map_err(input)?;
            cfg.invalidate_from(stem, Step::Render);
        }
        cfg.save()?;
        cfg.log(None, &format!("imported overrides from {}", path.display()))?;
    }
    run_until(&mut cfg, Step::Render)
}

fn eval(a: EvalArgs) -> Result<(), PipelineError> {
    let truths = read_ground_truth(&a.gt).map_err(input)?;
    let dets = match (&a.det, &a.config, &a.video) {
        (Some(det), _, _) => read_detections(det).map_err(input)?,
        (None, Some(config), Some(stem)) => {
            let cfg = load_project(config)?;
            if cfg.video(stem).is_none() {
                return Err(input(format!("unknown video '{stem}'")));
            }
            let paths = VideoPaths::new(&cfg, stem);
            if !cfg.completed(stem, Step::FaceBoxes) {
                return Err(PipelineError::NotReady {
                    stem: stem.clone(),
                    what: "face boxes".into(),
                    needs: Step::FaceBoxes,
                });
            }
            face_boxes_as_detections(&read_face_boxes(&paths.face_boxes).map_err(input)?)
        }
        _ => return Err(input("give --det or --config with --video")),
    };
    if !(a.iou > 0.0 && a.iou <= 1.0) {
        return Err(input(format!("IoU threshold {} outside (0, 1]", a.iou)));
    }
    let report = evaluate(&dets, &truths, a.iou);
    fs::create_dir_all(&a.out_dir).map_err(input)?;
    write_json(&a.out_dir.join("report.json"), &report)?;
    write_pr_curve(&a.out_dir.join("pr_curve.csv"), &report).map_err(input)?;
    print_json(&report);
    Ok(())
}

fn export_cmd(a: ExportArgs) -> Result<(), PipelineError> {
    let cfg = load_project(&a.config)?;
    let what: Vec<ExportItem> = a
        .what
        .iter()
        .map(|w| match w {
            What::Blurred => ExportItem::BlurredVideo,
            What::Backup => ExportItem::Backup,
            What::KeypointsJson => ExportItem::Keypoints(KeypointFormat::Json),
            What::KeypointsCsv => ExportItem::Keypoints(KeypointFormat::Csv),
        })
        .collect();
    let opts = ExportOptions {
        skip_quality_check: a.skip_quality_check,
        encode: a.encode,
        ..Default::default()
    };
    let files = export(&cfg, &what, &a.dest, &opts)?;
    println!("{} files written to {}", files.len(), a.dest.display());
    Ok(())
}

fn review_cmd(a: ReviewArgs) -> Result<(), PipelineError> {
    let cfg = load_project(&a.config)?;
    let state = review::ReviewState::load(cfg)?;
    let rt = tokio::runtime::Runtime::new().map_err(input)?;
    rt.block_on(async move {
        let listener = review::bind(a.bind, a.allow_remote).await?;
        eprintln!("review service on http://{}", listener.local_addr().map_err(input)?);
        review::serve(listener, state, a.ui_dir, async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
    })
}

fn fixture(a: FixtureArgs) -> Result<(), PipelineError> {
    let spec = FixtureSpec {
        stem: a.stem,
        frames: a.frames,
        seed: a.seed,
        ..Default::default()
    };
    let fx = write_fixture(&a.out, &spec)?;
    println!("poses {}\nframes {}\nmetadata {}", fx.pose_dir.display(), fx.frame_dir.display(), fx.metadata.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Init(a) => init(a),
        Command::Run(a) => load_project(&a.config).and_then(|mut cfg| {
            let report = run_pipeline(
                &mut cfg,
                &RunOptions {
                    until: a.until,
                    only: a.videos,
                    restart: a.restart,
                    ..Default::default()
                },
            )?;
            report_run(&report);
            report.into_result().map(|_| ())
        }),
        Command::Track(a) => track(a),
        Command::Interpolate(a) => interpolate(a),
        Command::Identify(a) => identify(a),
        Command::Blur(a) => blur(a),
        Command::Eval(a) => eval(a),
        Command::Export(a) => export_cmd(a),
        Command::Review(a) => review_cmd(a),
        Command::Fixture(a) => fixture(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
