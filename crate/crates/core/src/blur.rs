//! Face-region estimation from skeletons and rendering of solid or Gaussian
//! blurring onto frames.
//!
//! A face box is a square centered on the per-axis median of the facial
//! keypoints, with side equal to one third of the neck to mid-hip distance.

use std::fs;
use std::path::{Path, PathBuf};

use image::{Rgb, RgbImage};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{frame_file_name, FrameStore, IngestError};
use crate::model::{body25, Point, Skeleton, Track, VideoGeometry};
use crate::overrides::{apply_overrides, EffectiveBoxes, OverrideError, OverrideSet};

/// Fallback side, as a fraction of frame height, for tracks that never show a spine.
pub const FALLBACK_SIDE_FRACTION: f64 = 0.25;

#[derive(Debug, Error)]
pub enum RenderError {
    #[error("face box references frame {0}, which is not in the frame store")]
    MissingFrame(u64),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Override(#[from] OverrideError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("face box sidecar: {0}")]
    Sidecar(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum BlurStyle {
    Gaussian,
    #[default]
    Solid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode", content = "track_id")]
pub enum BlurTargets {
    PatientOnly(u32),
    AllPersons,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlurSpec {
    pub targets: BlurTargets,
    pub style: BlurStyle,
}

/// Where a face box's side length came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SideSource {
    /// One third of this frame's spine.
    Spine,
    /// Borrowed from the nearest frame of the same track with a spine.
    Track,
    /// Fixed fraction of frame height.
    Frame,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FaceGeometry {
    pub center: Point,
    pub side: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FaceBox {
    pub frame: u64,
    pub track_id: u32,
    pub cx: f64,
    pub cy: f64,
    pub side: f64,
    pub source: SideSource,
}

impl FaceBox {
    pub fn center(&self) -> Point {
        Point::new(self.cx, self.cy)
    }

    pub fn rect(&self) -> Rect {
        Rect::square(self.center(), self.side)
    }
}

/// Continuous axis-aligned rectangle `[x0, x1) x [y0, y1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl Rect {
    pub fn square(center: Point, side: f64) -> Self {
        let h = side / 2.0;
        Self {
            x0: center.x - h,
            y0: center.y - h,
            x1: center.x + h,
            y1: center.y + h,
        }
    }

    pub fn from_xywh(x: f64, y: f64, w: f64, h: f64) -> Self {
        Self {
            x0: x,
            y0: y,
            x1: x + w,
            y1: y + h,
        }
    }

    pub fn width(&self) -> f64 {
        self.x1 - self.x0
    }

    pub fn height(&self) -> f64 {
        self.y1 - self.y0
    }

    /// Pixel bounds after outward rounding, clipped to the image.
    /// Returns `None` when nothing of the rect is visible.
    pub fn pixel_bounds(&self, width: u32, height: u32) -> Option<PixelRect> {
        let clip = |v: f64, max: u32| v.clamp(0.0, max as f64) as u32;
        let px0 = clip(self.x0.floor(), width);
        let px1 = clip(self.x1.ceil(), width);
        let py0 = clip(self.y0.floor(), height);
        let py1 = clip(self.y1.ceil(), height);
        (px0 < px1 && py0 < py1).then_some(PixelRect {
            x0: px0,
            y0: py0,
            x1: px1,
            y1: py1,
        })
    }
}

/// Half-open integer pixel rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PixelRect {
    pub x0: u32,
    pub y0: u32,
    pub x1: u32,
    pub y1: u32,
}

impl PixelRect {
    pub fn contains(&self, x: u32, y: u32) -> bool {
        x >= self.x0 && x < self.x1 && y >= self.y0 && y < self.y1
    }
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    }
}

/// Per-axis median of the reliable facial keypoints.
pub fn face_center(s: &Skeleton) -> Option<Point> {
    let pts: Vec<Point> = body25::FACE
        .iter()
        .map(|&i| s.keypoints[i])
        .filter(|k| k.is_reliable())
        .map(|k| k.point())
        .collect();
    if pts.is_empty() {
        return None;
    }
    let mut xs: Vec<f64> = pts.iter().map(|p| p.x).collect();
    let mut ys: Vec<f64> = pts.iter().map(|p| p.y).collect();
    Some(Point::new(median(&mut xs), median(&mut ys)))
}

/// Neck to mid-hip distance, when both are reliable.
pub fn spine_length(s: &Skeleton) -> Option<f64> {
    let neck = s.keypoints[body25::NECK];
    let hip = s.keypoints[body25::MID_HIP];
    (neck.is_reliable() && hip.is_reliable()).then(|| neck.point().distance(&hip.point()))
}

pub fn face_box(s: &Skeleton) -> Option<FaceGeometry> {
    Some(FaceGeometry {
        center: face_center(s)?,
        side: spine_length(s)? / 3.0,
    })
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FaceBoxSet {
    pub boxes: Vec<FaceBox>,
    /// `(frame, track_id)` where no facial keypoint was usable.
    pub skipped: Vec<(u64, u32)>,
}

/// Computes a face box for every frame of every track.
///
/// Frames without a usable spine borrow the side from the nearest earlier
/// frame of the same track that has one, else the nearest later one, else a
/// fixed fraction of frame height.
pub fn compute_face_boxes(tracks: &[Track], geom: &VideoGeometry) -> FaceBoxSet {
    let mut set = FaceBoxSet::default();
    for t in tracks {
        let sides: Vec<(u64, Option<f64>)> = t
            .frames
            .iter()
            .map(|(f, s)| (*f, spine_length(s).map(|l| l / 3.0)))
            .collect();
        let mut last: Option<f64> = None;
        for (i, (f, s)) in t.frames.iter().enumerate() {
            if sides[i].1.is_some() {
                last = sides[i].1;
            }
            let Some(center) = face_center(s) else {
                set.skipped.push((*f, t.track_id));
                continue;
            };
            let (side, source) = match sides[i].1 {
                Some(side) => (side, SideSource::Spine),
                None => match last.or_else(|| sides[i..].iter().find_map(|(_, s)| *s)) {
                    Some(side) => (side, SideSource::Track),
                    None => (FALLBACK_SIDE_FRACTION * geom.height as f64, SideSource::Frame),
                },
            };
            set.boxes.push(FaceBox {
                frame: *f,
                track_id: t.track_id,
                cx: center.x,
                cy: center.y,
                side,
                source,
            });
        }
    }
    set.boxes.sort_by_key(|b| (b.frame, b.track_id));
    set.skipped.sort_unstable();
    set
}

/// Keeps only the boxes selected by the blur targets.
pub fn select_targets(boxes: &[FaceBox], targets: BlurTargets) -> Vec<FaceBox> {
    match targets {
        BlurTargets::AllPersons => boxes.to_vec(),
        BlurTargets::PatientOnly(id) => boxes.iter().copied().filter(|b| b.track_id == id).collect(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "id")]
pub enum BoxId {
    Track(u32),
    Manual(u64),
}

/// One rectangle to obscure on one frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlurRegion {
    pub id: BoxId,
    pub rect: Rect,
    pub style: BlurStyle,
}

impl BlurRegion {
    /// Gaussian sigma for this region: a sixth of the square's side (the
    /// shorter edge for manual rectangles).
    pub fn sigma(&self) -> f64 {
        self.rect.width().min(self.rect.height()) / 6.0
    }

    pub fn is_degenerate(&self) -> bool {
        !(self.rect.width() > 0.0 && self.rect.height() > 0.0)
    }
}

fn reflect(i: i64, n: i64) -> usize {
    let period = 2 * n;
    let m = i.rem_euclid(period);
    (if m < n { m } else { period - 1 - m }) as usize
}

fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil().max(0.0) as i64;
    let mut k: Vec<f64> = (-radius..=radius)
        .map(|i| (-((i * i) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = k.iter().sum();
    k.iter_mut().for_each(|w| *w /= sum);
    k
}

fn blur_region(img: &mut RgbImage, r: PixelRect, sigma: f64) {
    let w = (r.x1 - r.x0) as usize;
    let h = (r.y1 - r.y0) as usize;
    let kernel = gaussian_kernel(sigma);
    let radius = (kernel.len() / 2) as i64;
    let mut buf = vec![[0f64; 3]; w * h];
    for y in 0..h {
        for x in 0..w {
            let p = img.get_pixel(r.x0 + x as u32, r.y0 + y as u32).0;
            buf[y * w + x] = [p[0] as f64, p[1] as f64, p[2] as f64];
        }
    }
    let mut tmp = vec![[0f64; 3]; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = [0f64; 3];
            for (j, kw) in kernel.iter().enumerate() {
                let sx = reflect(x as i64 + j as i64 - radius, w as i64);
                let v = buf[y * w + sx];
                for c in 0..3 {
                    acc[c] += kw * v[c];
                }
            }
            tmp[y * w + x] = acc;
        }
    }
    for y in 0..h {
        for x in 0..w {
            let mut acc = [0f64; 3];
            for (j, kw) in kernel.iter().enumerate() {
                let sy = reflect(y as i64 + j as i64 - radius, h as i64);
                let v = tmp[sy * w + x];
                for c in 0..3 {
                    acc[c] += kw * v[c];
                }
            }
            let px = Rgb(acc.map(|v| v.round().clamp(0.0, 255.0) as u8));
            img.put_pixel(r.x0 + x as u32, r.y0 + y as u32, px);
        }
    }
}

/// Applies regions in order to a copy of `frame`. Degenerate regions are skipped.
pub fn render_frame(frame: &RgbImage, regions: &[BlurRegion]) -> RgbImage {
    let mut out = frame.clone();
    let (w, h) = out.dimensions();
    for region in regions.iter().filter(|r| !r.is_degenerate()) {
        let Some(px) = region.rect.pixel_bounds(w, h) else { continue };
        match region.style {
            BlurStyle::Solid => {
                for y in px.y0..px.y1 {
                    for x in px.x0..px.x1 {
                        out.put_pixel(x, y, Rgb([0, 0, 0]));
                    }
                }
            }
            BlurStyle::Gaussian => blur_region(&mut out, px, region.sigma()),
        }
    }
    out
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RenderReport {
    pub frames_written: u64,
    pub regions_drawn: usize,
    /// `(frame, box)` pairs skipped for non-positive size.
    pub degenerate: Vec<(u64, BoxId)>,
}

/// Renders every frame of `store` into `out_dir` with the effective regions.
pub fn render_frames(store: &FrameStore, effective: &EffectiveBoxes, out_dir: &Path) -> Result<RenderReport, RenderError> {
    if let Some((&f, _)) = effective.iter().find(|(f, _)| !store.contains(**f)) {
        return Err(RenderError::MissingFrame(f));
    }
    fs::create_dir_all(out_dir).map_err(|source| RenderError::Io {
        path: out_dir.to_path_buf(),
        source,
    })?;
    let empty = Vec::new();
    let per_frame = (0..store.geometry.frame_count)
        .into_par_iter()
        .map(|i| {
            let regions = effective.get(&i).unwrap_or(&empty);
            let rendered = render_frame(&store.load(i)?, regions);
            crate::ingest::write_rgb(&out_dir.join(frame_file_name(i)), i, &rendered)?;
            let degenerate: Vec<(u64, BoxId)> = regions.iter().filter(|r| r.is_degenerate()).map(|r| (i, r.id)).collect();
            Ok((regions.len() - degenerate.len(), degenerate))
        })
        .collect::<Result<Vec<_>, RenderError>>()?;
    let mut report = RenderReport {
        frames_written: store.geometry.frame_count,
        ..Default::default()
    };
    for (drawn, degenerate) in per_frame {
        report.regions_drawn += drawn;
        report.degenerate.extend(degenerate);
    }
    Ok(report)
}

/// Resolves targets and overrides, then renders.
pub fn render(
    store: &FrameStore,
    boxes: &[FaceBox],
    spec: &BlurSpec,
    overrides: &OverrideSet,
    out_dir: &Path,
) -> Result<RenderReport, RenderError> {
    let selected = select_targets(boxes, spec.targets);
    let effective = apply_overrides(&selected, spec.style, overrides, store.geometry.frame_count)?;
    render_frames(store, &effective, out_dir)
}

const SIDECAR_HEADER: [&str; 6] = ["frame", "track_id", "cx", "cy", "side", "source"];

fn source_name(s: SideSource) -> &'static str {
    match s {
        SideSource::Spine => "spine",
        SideSource::Track => "track",
        SideSource::Frame => "frame",
    }
}

/// Writes face boxes as CSV: `frame,track_id,cx,cy,side,source`.
pub fn write_face_boxes(path: &Path, boxes: &[FaceBox]) -> Result<(), RenderError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| RenderError::Sidecar(e.to_string()))?;
    let wr = |e: csv::Error| RenderError::Sidecar(e.to_string());
    w.write_record(SIDECAR_HEADER).map_err(wr)?;
    for b in boxes {
        w.write_record([
            b.frame.to_string(),
            b.track_id.to_string(),
            b.cx.to_string(),
            b.cy.to_string(),
            b.side.to_string(),
            source_name(b.source).to_string(),
        ])
        .map_err(wr)?;
    }
    w.flush().map_err(|source| RenderError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn read_face_boxes(path: &Path) -> Result<Vec<FaceBox>, RenderError> {
    let mut r = csv::Reader::from_path(path).map_err(|e| RenderError::Sidecar(e.to_string()))?;
    let mut out = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| RenderError::Sidecar(e.to_string()))?;
        let bad = || RenderError::Sidecar(format!("row {}: malformed record", line + 1));
        if rec.len() != SIDECAR_HEADER.len() {
            return Err(bad());
        }
        let num = |i: usize| rec[i].parse::<f64>().map_err(|_| bad());
        out.push(FaceBox {
            frame: rec[0].parse().map_err(|_| bad())?,
            track_id: rec[1].parse().map_err(|_| bad())?,
            cx: num(2)?,
            cy: num(3)?,
            side: num(4)?,
            source: match &rec[5] {
                "spine" => SideSource::Spine,
                "track" => SideSource::Track,
                "frame" => SideSource::Frame,
                _ => return Err(bad()),
            },
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Keypoint, KEYPOINT_COUNT};
    use crate::overrides::{BoxTarget, Override, OverrideAction};
    use crate::synth;
    use proptest::prelude::*;

    fn skeleton_with(face_x: [f64; 5], neck: (f64, f64), hip: (f64, f64)) -> Skeleton {
        let mut s = Skeleton::new([Keypoint::new(50.0, 50.0, 0.9); KEYPOINT_COUNT]);
        for (i, &x) in body25::FACE.iter().zip(face_x.iter()) {
            s.keypoints[*i] = Keypoint::new(x, 40.0, 0.9);
        }
        s.keypoints[body25::NECK] = Keypoint::new(neck.0, neck.1, 0.9);
        s.keypoints[body25::MID_HIP] = Keypoint::new(hip.0, hip.1, 0.9);
        s
    }

    #[test]
    fn side_is_third_of_spine() {
        let s = skeleton_with([100.0; 5], (100.0, 100.0), (100.0, 400.0));
        assert_eq!(face_box(&s).unwrap().side, 100.0);
    }

    #[test]
    fn side_from_hypotenuse() {
        // sqrt(120^2 + 90^2) = 150
        let s = skeleton_with([100.0; 5], (0.0, 0.0), (120.0, 90.0));
        assert_eq!(face_box(&s).unwrap().side, 50.0);
    }

    #[test]
    fn median_center_ignores_outlier() {
        let s = skeleton_with([98.0, 100.0, 102.0, 100.0, 300.0], (0.0, 0.0), (0.0, 90.0));
        assert_eq!(face_box(&s).unwrap().center, Point::new(100.0, 40.0));
    }

    #[test]
    fn missing_spine_gives_no_box() {
        let mut s = skeleton_with([100.0; 5], (0.0, 0.0), (0.0, 90.0));
        s.keypoints[body25::MID_HIP].c = 0.2;
        assert!(face_box(&s).is_none());
        assert!(face_center(&s).is_some());
    }

    #[test]
    fn even_count_median_averages() {
        let mut s = skeleton_with([10.0, 20.0, 30.0, 40.0, 50.0], (0.0, 0.0), (0.0, 90.0));
        s.keypoints[body25::L_EAR] = Keypoint::UNDETECTED;
        assert_eq!(face_center(&s).unwrap().x, 25.0);
    }

    #[test]
    fn side_fallbacks() {
        let geom = VideoGeometry::new(640, 360, 4, 30.0).unwrap();
        let mut t = Track::new(2);
        let good = skeleton_with([100.0; 5], (100.0, 100.0), (100.0, 400.0));
        let mut no_spine = good;
        no_spine.keypoints[body25::NECK] = Keypoint::UNDETECTED;
        t.frames.insert(0, no_spine);
        t.frames.insert(1, good);
        t.frames.insert(2, no_spine);
        let set = compute_face_boxes(&[t], &geom);
        let sources: Vec<_> = set.boxes.iter().map(|b| (b.side, b.source)).collect();
        assert_eq!(
            sources,
            vec![(100.0, SideSource::Track), (100.0, SideSource::Spine), (100.0, SideSource::Track)]
        );

        let mut lone = Track::new(3);
        lone.frames.insert(0, no_spine);
        let set = compute_face_boxes(&[lone], &geom);
        assert_eq!(set.boxes[0].side, 90.0);
        assert_eq!(set.boxes[0].source, SideSource::Frame);
    }

    fn white(w: u32, h: u32) -> RgbImage {
        RgbImage::from_pixel(w, h, Rgb([255, 255, 255]))
    }

    fn square_region(id: u32, cx: f64, cy: f64, side: f64, style: BlurStyle) -> BlurRegion {
        BlurRegion {
            id: BoxId::Track(id),
            rect: Rect::square(Point::new(cx, cy), side),
            style,
        }
    }

    #[test]
    fn solid_box_exact_region() {
        let img = white(40, 40);
        let out = render_frame(&img, &[square_region(0, 15.0, 15.0, 10.0, BlurStyle::Solid)]);
        let mut black = 0;
        for (x, y, p) in out.enumerate_pixels() {
            let inside = (10..20).contains(&x) && (10..20).contains(&y);
            if inside {
                assert_eq!(p.0, [0, 0, 0]);
                black += 1;
            } else {
                assert_eq!(p.0, [255, 255, 255]);
            }
        }
        assert_eq!(black, 100);
    }

    #[test]
    fn outward_rounding_and_clipping() {
        let r = Rect::square(Point::new(2.5, 2.5), 3.0);
        assert_eq!(r.pixel_bounds(100, 100), Some(PixelRect { x0: 1, y0: 1, x1: 4, y1: 4 }));
        let r = Rect::square(Point::new(1.3, 1.3), 3.0);
        assert_eq!(r.pixel_bounds(100, 100), Some(PixelRect { x0: 0, y0: 0, x1: 3, y1: 3 }));
        let edge = Rect::square(Point::new(99.0, 50.0), 10.0);
        assert_eq!(edge.pixel_bounds(100, 100).unwrap().x1, 100);
        assert!(Rect::square(Point::new(-50.0, -50.0), 10.0).pixel_bounds(100, 100).is_none());
    }

    #[test]
    fn empty_regions_no_op() {
        let img = synth::textured_frame(32, 24, 0, 1);
        assert_eq!(render_frame(&img, &[]), img);
    }

    #[test]
    fn gaussian_constant_fixed_point() {
        let img = RgbImage::from_pixel(50, 50, Rgb([37, 200, 91]));
        let out = render_frame(&img, &[square_region(0, 25.0, 25.0, 30.0, BlurStyle::Gaussian)]);
        assert_eq!(out, img);
    }

    #[test]
    fn gaussian_changes_texture_only_inside() {
        let img = synth::textured_frame(60, 60, 3, 9);
        let region = square_region(0, 30.0, 30.0, 24.0, BlurStyle::Gaussian);
        let out = render_frame(&img, &[region]);
        let px = region.rect.pixel_bounds(60, 60).unwrap();
        let mut changed = 0;
        for (x, y, p) in out.enumerate_pixels() {
            if px.contains(x, y) {
                changed += (p != img.get_pixel(x, y)) as usize;
            } else {
                assert_eq!(p, img.get_pixel(x, y));
            }
        }
        assert!(changed > 300);
    }

    #[test]
    fn gaussian_kernel_normalized() {
        let k = gaussian_kernel(2.0);
        assert_eq!(k.len(), 13);
        assert!((k.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn reflect_indices() {
        let v: Vec<usize> = (-3..7).map(|i| reflect(i, 4)).collect();
        assert_eq!(v, vec![2, 1, 0, 0, 1, 2, 3, 3, 2, 1]);
        assert_eq!(reflect(-9, 2), 0);
    }

    #[test]
    fn degenerate_region_skipped() {
        let img = white(10, 10);
        let out = render_frame(&img, &[square_region(0, 5.0, 5.0, 0.0, BlurStyle::Solid)]);
        assert_eq!(out, img);
    }

    #[test]
    fn render_store_and_missing_frame() {
        let dir = tempfile::tempdir().unwrap();
        let frames = dir.path().join("frames");
        fs::create_dir_all(&frames).unwrap();
        for i in 0..3 {
            crate::ingest::write_rgb(&frames.join(frame_file_name(i)), i, &synth::textured_frame(40, 30, i, 2)).unwrap();
        }
        let store = crate::ingest::load_frames(&frames, 30.0).unwrap();
        let boxes = vec![FaceBox { frame: 1, track_id: 0, cx: 20.0, cy: 15.0, side: 8.0, source: SideSource::Spine }];
        let spec = BlurSpec { targets: BlurTargets::AllPersons, style: BlurStyle::Solid };
        let out = dir.path().join("out");
        let report = render(&store, &boxes, &spec, &OverrideSet::default(), &out).unwrap();
        assert_eq!(report.frames_written, 3);
        assert_eq!(report.regions_drawn, 1);
        let f1 = crate::ingest::read_rgb(&out.join(frame_file_name(1)), 1).unwrap();
        assert_eq!(f1.get_pixel(20, 15).0, [0, 0, 0]);
        assert_eq!(crate::ingest::read_rgb(&out.join(frame_file_name(0)), 0).unwrap(), store.load(0).unwrap());

        let bad = vec![FaceBox { frame: 9, ..boxes[0] }];
        assert!(matches!(render(&store, &bad, &spec, &OverrideSet::default(), &out), Err(RenderError::MissingFrame(9))));

        let unblur = OverrideSet::from_overrides(vec![Override {
            id: 1,
            stem: "v".into(),
            start: 0,
            end: 2,
            action: OverrideAction::Unblur { target: BoxTarget::All },
            note: String::new(),
        }]);
        let out2 = dir.path().join("out2");
        render(&store, &boxes, &spec, &unblur, &out2).unwrap();
        for i in 0..3 {
            assert_eq!(crate::ingest::read_rgb(&out2.join(frame_file_name(i)), i).unwrap(), store.load(i).unwrap());
        }
    }

    #[test]
    fn sidecar_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("boxes.csv");
        let boxes = vec![
            FaceBox { frame: 0, track_id: 1, cx: 10.25, cy: 1.0 / 3.0, side: 17.5, source: SideSource::Spine },
            FaceBox { frame: 2, track_id: 0, cx: 0.0, cy: 5.0, side: 90.0, source: SideSource::Frame },
        ];
        write_face_boxes(&p, &boxes).unwrap();
        assert_eq!(read_face_boxes(&p).unwrap(), boxes);
        assert!(fs::read_to_string(&p).unwrap().starts_with("frame,track_id,cx,cy,side,source\n"));
    }

    fn arb_boxes() -> impl Strategy<Value = Vec<FaceBox>> {
        proptest::collection::vec((0u32..3, 0.0f64..64.0, 0.0f64..48.0, 1.0f64..20.0), 0..6).prop_map(|v| {
            v.into_iter()
                .map(|(t, cx, cy, side)| FaceBox { frame: 0, track_id: t, cx, cy, side, source: SideSource::Spine })
                .collect()
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn containment_and_solid_fill(boxes in arb_boxes(), gaussian in any::<bool>()) {
            let style = if gaussian { BlurStyle::Gaussian } else { BlurStyle::Solid };
            let img = synth::textured_frame(64, 48, 0, 5);
            let effective = apply_overrides(&boxes, style, &OverrideSet::default(), 1).unwrap();
            let regions = effective.get(&0).cloned().unwrap_or_default();
            let out = render_frame(&img, &regions);
            let bounds: Vec<PixelRect> = regions.iter().filter_map(|r| r.rect.pixel_bounds(64, 48)).collect();
            for (x, y, p) in out.enumerate_pixels() {
                let inside = bounds.iter().any(|b| b.contains(x, y));
                if !inside {
                    prop_assert_eq!(p, img.get_pixel(x, y));
                } else if !gaussian {
                    prop_assert_eq!(p.0, [0, 0, 0]);
                }
            }
        }

        #[test]
        fn patient_only_subset_of_all(boxes in arb_boxes()) {
            let img = synth::textured_frame(64, 48, 0, 5);
            let render_with = |targets| {
                let sel = select_targets(&boxes, targets);
                let eff = apply_overrides(&sel, BlurStyle::Solid, &OverrideSet::default(), 1).unwrap();
                render_frame(&img, eff.get(&0).map(|v| v.as_slice()).unwrap_or(&[]))
            };
            let all = render_with(BlurTargets::AllPersons);
            let one = render_with(BlurTargets::PatientOnly(1));
            for (x, y, p) in one.enumerate_pixels() {
                if p != img.get_pixel(x, y) {
                    prop_assert!(all.get_pixel(x, y) != img.get_pixel(x, y));
                }
            }
        }
    }
}
