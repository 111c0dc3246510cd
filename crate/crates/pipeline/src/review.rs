//! Local HTTP service for the quality-check review.
//!
//! Computed boxes are never modified; reviewer edits live in the per-video
//! override file and are applied whenever a frame is rendered. Mutations are
//! serialized per video and written to disk before they are acknowledged.

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::io::Cursor;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, Mutex, RwLock};

use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{delete, get, post};
use axum::{Json, Router};
use deidpose_core::blur::{read_face_boxes, render, render_frame, select_targets, BlurRegion, BlurSpec, FaceBox};
use deidpose_core::ingest::FrameStore;
use deidpose_core::overrides::{apply_overrides, EffectiveBoxes, Override, OverrideAction, OverrideSet};
use serde::{Deserialize, Serialize};
use tokio::net::TcpListener;

use crate::error::PipelineError;
use crate::pipeline::{blur_spec, frame_store, load_patient, VideoPaths};
use crate::project::{ProjectConfig, Step};

pub const DEFAULT_BIND: &str = "127.0.0.1:8750";
const CACHE_CAPACITY: usize = 256;

struct Effective {
    revision: u64,
    boxes: Arc<EffectiveBoxes>,
}

struct VideoCtx {
    paths: VideoPaths,
    store: FrameStore,
    boxes: Vec<FaceBox>,
    spec: BlurSpec,
    overrides: RwLock<OverrideSet>,
    effective: RwLock<Effective>,
    write: tokio::sync::Mutex<()>,
}

impl VideoCtx {
    fn selected(&self) -> Vec<FaceBox> {
        select_targets(&self.boxes, self.spec.targets)
    }

    fn resolve(&self, set: &OverrideSet) -> Result<EffectiveBoxes, ApiError> {
        apply_overrides(&self.selected(), self.spec.style, set, self.store.geometry.frame_count)
            .map_err(|e| ApiError(StatusCode::BAD_REQUEST, e.to_string()))
    }

    fn effective(&self) -> (u64, Arc<EffectiveBoxes>) {
        let e = self.effective.read().unwrap();
        (e.revision, e.boxes.clone())
    }
}

#[derive(Default)]
struct FrameCache {
    order: VecDeque<(String, u64, u64)>,
    images: HashMap<(String, u64, u64), Arc<Vec<u8>>>,
}

impl FrameCache {
    fn get(&self, key: &(String, u64, u64)) -> Option<Arc<Vec<u8>>> {
        self.images.get(key).cloned()
    }

    fn put(&mut self, key: (String, u64, u64), png: Arc<Vec<u8>>) {
        if self.images.insert(key.clone(), png).is_none() {
            self.order.push_back(key);
        }
        while self.order.len() > CACHE_CAPACITY {
            if let Some(old) = self.order.pop_front() {
                self.images.remove(&old);
            }
        }
    }
}

pub struct ReviewState {
    cfg: Mutex<ProjectConfig>,
    videos: BTreeMap<String, VideoCtx>,
    cache: Mutex<FrameCache>,
}

impl ReviewState {
    /// Loads every video whose render step is complete.
    pub fn load(cfg: ProjectConfig) -> Result<Arc<Self>, PipelineError> {
        let mut videos = BTreeMap::new();
        for v in cfg.videos.iter().filter(|v| cfg.completed(&v.stem, Step::Render)) {
            let paths = VideoPaths::new(&cfg, &v.stem);
            let fail = |e: anyhow::Error| PipelineError::Input(format!("{}: {e:#}", v.stem));
            let patient = load_patient(&paths).map_err(fail)?;
            let spec = blur_spec(&cfg.settings, &patient).map_err(fail)?;
            let store = frame_store(v, &cfg.settings)?;
            let boxes = read_face_boxes(&paths.face_boxes).map_err(|e| fail(e.into()))?;
            let overrides = OverrideSet::load(&paths.overrides).map_err(|e| fail(e.into()))?;
            let effective = apply_overrides(&select_targets(&boxes, spec.targets), spec.style, &overrides, store.geometry.frame_count)
                .map_err(|e| fail(e.into()))?;
            videos.insert(
                v.stem.clone(),
                VideoCtx {
                    paths,
                    store,
                    boxes,
                    spec,
                    effective: RwLock::new(Effective {
                        revision: overrides.revision,
                        boxes: Arc::new(effective),
                    }),
                    overrides: RwLock::new(overrides),
                    write: tokio::sync::Mutex::new(()),
                },
            );
        }
        if videos.is_empty() {
            return Err(PipelineError::NotReady {
                stem: cfg.name.clone(),
                what: "review".into(),
                needs: Step::Render,
            });
        }
        Ok(Arc::new(Self {
            cfg: Mutex::new(cfg),
            videos,
            cache: Mutex::new(FrameCache::default()),
        }))
    }

    fn video(&self, stem: &str) -> Result<&VideoCtx, ApiError> {
        self.videos
            .get(stem)
            .ok_or_else(|| ApiError(StatusCode::NOT_FOUND, format!("unknown or unrendered video '{stem}'")))
    }
}

#[derive(Debug)]
pub struct ApiError(pub StatusCode, pub String);

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(serde_json::json!({ "error": self.1 }))).into_response()
    }
}

fn internal(e: impl std::fmt::Display) -> ApiError {
    ApiError(StatusCode::INTERNAL_SERVER_ERROR, e.to_string())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoInfo {
    pub stem: String,
    pub frame_count: u64,
    pub width: u32,
    pub height: u32,
    pub signed_off: bool,
    pub revision: u64,
}

async fn list_videos(State(st): State<Arc<ReviewState>>) -> Json<Vec<VideoInfo>> {
    let cfg = st.cfg.lock().unwrap();
    Json(
        st.videos
            .iter()
            .map(|(stem, v)| VideoInfo {
                stem: stem.clone(),
                frame_count: v.store.geometry.frame_count,
                width: v.store.geometry.width,
                height: v.store.geometry.height,
                signed_off: cfg.completed(stem, Step::QualityCheck),
                revision: v.overrides.read().unwrap().revision,
            })
            .collect(),
    )
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum View {
    Raw,
    #[default]
    Rendered,
}

#[derive(Debug, Deserialize)]
struct FrameQuery {
    #[serde(default)]
    view: View,
}

fn encode_png(img: &image::RgbImage) -> Result<Vec<u8>, ApiError> {
    let mut buf = Cursor::new(Vec::new());
    img.write_to(&mut buf, image::ImageFormat::Png).map_err(internal)?;
    Ok(buf.into_inner())
}

fn frame_png(st: &ReviewState, stem: &str, index: u64, view: View) -> Result<Arc<Vec<u8>>, ApiError> {
    let v = st.video(stem)?;
    if !v.store.contains(index) {
        return Err(ApiError(StatusCode::NOT_FOUND, format!("frame {index} out of range")));
    }
    if view == View::Raw {
        return std::fs::read(v.store.frame_path(index)).map(Arc::new).map_err(internal);
    }
    let (revision, effective) = v.effective();
    let key = (stem.to_string(), index, revision);
    if let Some(png) = st.cache.lock().unwrap().get(&key) {
        return Ok(png);
    }
    let raw = v.store.load(index).map_err(internal)?;
    let regions: &[BlurRegion] = effective.get(&index).map_or(&[], Vec::as_slice);
    let png = Arc::new(encode_png(&render_frame(&raw, regions))?);
    st.cache.lock().unwrap().put(key, png.clone());
    Ok(png)
}

async fn get_frame(
    State(st): State<Arc<ReviewState>>,
    Path((stem, index)): Path<(String, u64)>,
    Query(q): Query<FrameQuery>,
) -> Result<Response, ApiError> {
    let png = tokio::task::spawn_blocking(move || frame_png(&st, &stem, index, q.view))
        .await
        .map_err(internal)??;
    Ok(([(header::CONTENT_TYPE, "image/png")], png.as_ref().clone()).into_response())
}

#[derive(Debug, Deserialize)]
struct BoxesQuery {
    frame: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxesView {
    pub frame: u64,
    pub revision: u64,
    /// Patient track in patient-only mode.
    pub patient: Option<u32>,
    /// Every computed face box on this frame, targeted or not.
    pub computed: Vec<FaceBox>,
    /// What gets rendered on this frame.
    pub effective: Vec<BlurRegion>,
}

async fn get_boxes(
    State(st): State<Arc<ReviewState>>,
    Path(stem): Path<String>,
    Query(q): Query<BoxesQuery>,
) -> Result<Json<BoxesView>, ApiError> {
    let v = st.video(&stem)?;
    if !v.store.contains(q.frame) {
        return Err(ApiError(StatusCode::NOT_FOUND, format!("frame {} out of range", q.frame)));
    }
    let (revision, effective) = v.effective();
    Ok(Json(BoxesView {
        frame: q.frame,
        revision,
        patient: match v.spec.targets {
            deidpose_core::blur::BlurTargets::PatientOnly(p) => Some(p),
            deidpose_core::blur::BlurTargets::AllPersons => None,
        },
        computed: v.boxes.iter().filter(|b| b.frame == q.frame).copied().collect(),
        effective: effective.get(&q.frame).cloned().unwrap_or_default(),
    }))
}

async fn get_overrides(State(st): State<Arc<ReviewState>>, Path(stem): Path<String>) -> Result<Json<OverrideSet>, ApiError> {
    Ok(Json(st.video(&stem)?.overrides.read().unwrap().clone()))
}

/// An override as submitted; `id` and `stem` may be left out.
#[derive(Debug, Clone, Deserialize)]
pub struct OverrideInput {
    pub id: Option<u64>,
    pub stem: Option<String>,
    pub start: u64,
    pub end: u64,
    pub action: OverrideAction,
    #[serde(default)]
    pub note: String,
}

/// PUT body. `revision`, when present, must match the current revision.
#[derive(Debug, Clone, Deserialize)]
pub struct OverridePut {
    pub revision: Option<u64>,
    pub overrides: Vec<OverrideInput>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ack {
    pub revision: u64,
    pub signed_off: bool,
}

/// Validates, persists and publishes a new override set. Any edit voids an
/// earlier sign-off.
fn commit(st: &ReviewState, stem: &str, v: &VideoCtx, next: OverrideSet) -> Result<Ack, ApiError> {
    let effective = v.resolve(&next)?;
    next.save(&v.paths.overrides).map_err(internal)?;
    let revision = next.revision;
    *v.overrides.write().unwrap() = next;
    *v.effective.write().unwrap() = Effective {
        revision,
        boxes: Arc::new(effective),
    };
    let mut cfg = st.cfg.lock().unwrap();
    if cfg.completed(stem, Step::QualityCheck) {
        cfg.invalidate_from(stem, Step::QualityCheck);
        cfg.save().map_err(internal)?;
        cfg.log(Some(stem), "sign-off withdrawn by override edit").map_err(internal)?;
    }
    cfg.log(Some(stem), &format!("overrides at revision {revision}")).map_err(internal)?;
    Ok(Ack {
        revision,
        signed_off: false,
    })
}

async fn put_overrides(
    State(st): State<Arc<ReviewState>>,
    Path(stem): Path<String>,
    Json(body): Json<OverridePut>,
) -> Result<Json<Ack>, ApiError> {
    let v = st.video(&stem)?;
    let _guard = v.write.lock().await;
    let mut next = v.overrides.read().unwrap().clone();
    if let Some(base) = body.revision {
        if base != next.revision {
            return Err(ApiError(
                StatusCode::CONFLICT,
                format!("stale revision {base}, current is {}", next.revision),
            ));
        }
    }
    let mut fresh = body.overrides.iter().filter_map(|o| o.id).map(|id| id + 1).max().unwrap_or(0).max(next.next_id());
    let mut list = Vec::with_capacity(body.overrides.len());
    for o in body.overrides {
        if o.stem.as_deref().is_some_and(|s| s != stem) {
            return Err(ApiError(StatusCode::BAD_REQUEST, format!("override for '{}' sent to '{stem}'", o.stem.unwrap())));
        }
        let id = o.id.unwrap_or_else(|| {
            fresh += 1;
            fresh - 1
        });
        list.push(Override {
            id,
            stem: stem.clone(),
            start: o.start,
            end: o.end,
            action: o.action,
            note: o.note,
        });
    }
    next.replace(list);
    Ok(Json(commit(&st, &stem, v, next)?))
}

async fn delete_override(
    State(st): State<Arc<ReviewState>>,
    Path((stem, id)): Path<(String, u64)>,
) -> Result<Json<Ack>, ApiError> {
    let v = st.video(&stem)?;
    let _guard = v.write.lock().await;
    let mut next = v.overrides.read().unwrap().clone();
    if next.remove(id).is_none() {
        return Err(ApiError(StatusCode::NOT_FOUND, format!("no override {id}")));
    }
    Ok(Json(commit(&st, &stem, v, next)?))
}

/// Re-renders the video with the current overrides, then marks the quality
/// check complete.
async fn signoff(State(st): State<Arc<ReviewState>>, Path(stem): Path<String>) -> Result<Json<Ack>, ApiError> {
    let v = st.video(&stem)?;
    let _guard = v.write.lock().await;
    let st2 = st.clone();
    let stem2 = stem.clone();
    let revision = tokio::task::spawn_blocking(move || -> Result<u64, ApiError> {
        let v = st2.video(&stem2)?;
        let set = v.overrides.read().unwrap().clone();
        let tmp = v.paths.rendered.with_extension("signoff.tmp");
        if tmp.exists() {
            std::fs::remove_dir_all(&tmp).map_err(internal)?;
        }
        render(&v.store, &v.boxes, &v.spec, &set, &tmp).map_err(internal)?;
        if v.paths.rendered.exists() {
            std::fs::remove_dir_all(&v.paths.rendered).map_err(internal)?;
        }
        std::fs::rename(&tmp, &v.paths.rendered).map_err(internal)?;
        Ok(set.revision)
    })
    .await
    .map_err(internal)??;
    let mut cfg = st.cfg.lock().unwrap();
    cfg.mark(&stem, Step::QualityCheck);
    cfg.save().map_err(internal)?;
    cfg.log(Some(&stem), &format!("quality check signed off at override revision {revision}"))
        .map_err(internal)?;
    Ok(Json(Ack {
        revision,
        signed_off: true,
    }))
}

/// The API routes, plus static UI assets from `ui_dir` when given.
pub fn router(state: Arc<ReviewState>, ui_dir: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/videos", get(list_videos))
        .route("/videos/{stem}/frames/{index}", get(get_frame))
        .route("/videos/{stem}/boxes", get(get_boxes))
        .route("/videos/{stem}/overrides", get(get_overrides).put(put_overrides))
        .route("/videos/{stem}/overrides/{id}", delete(delete_override))
        .route("/videos/{stem}/signoff", post(signoff))
        .with_state(state);
    match ui_dir {
        Some(dir) => api.fallback_service(tower_http::services::ServeDir::new(dir)),
        None => api,
    }
}

/// Binds the listener, refusing non-loopback addresses unless allowed.
pub async fn bind(addr: SocketAddr, allow_remote: bool) -> Result<TcpListener, PipelineError> {
    if !addr.ip().is_loopback() && !allow_remote {
        return Err(PipelineError::Input(format!(
            "{addr} is not a loopback address; pass --allow-remote to expose the review service"
        )));
    }
    TcpListener::bind(addr)
        .await
        .map_err(|e| PipelineError::Input(format!("cannot bind {addr}: {e}")))
}

/// Serves until the shutdown future resolves.
pub async fn serve(
    listener: TcpListener,
    state: Arc<ReviewState>,
    ui_dir: Option<PathBuf>,
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> Result<(), PipelineError> {
    let addr = listener.local_addr().ok();
    axum::serve(listener, router(state, ui_dir))
        .with_graceful_shutdown(shutdown)
        .await
        .map_err(|e| PipelineError::Input(format!("review service on {addr:?}: {e}")))
}
