//! Face-detection evaluation against ground truth: IoU, confidence-ordered
//! matching, precision/recall/F1, the precision-recall sweep and 11-point
//! interpolated average precision. Also compares two keypoint sets.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::blur::FaceBox;
use crate::model::{FramePose, KEYPOINT_COUNT};

pub const DEFAULT_IOU_THRESHOLD: f64 = 0.5;

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("average precision is undefined without ground truth boxes")]
    NoGroundTruth,
    #[error("detections carry no confidence; precision-recall sweep unavailable")]
    NoConfidence,
    #[error("invalid box at row {row}: {message}")]
    InvalidBox { row: usize, message: String },
    #[error("frame sets differ: only in first {only_a:?}, only in second {only_b:?}")]
    Misaligned { only_a: Vec<u64>, only_b: Vec<u64> },
    #[error("{0}")]
    Csv(String),
}

/// Axis-aligned box with top-left corner `(x, y)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoxXywh {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl BoxXywh {
    pub fn new(x: f64, y: f64, w: f64, h: f64) -> Self {
        Self { x, y, w, h }
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthBox {
    pub frame: u64,
    pub bbox: BoxXywh,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionBox {
    pub frame: u64,
    pub bbox: BoxXywh,
    /// Absent for detectors that report no score.
    pub confidence: Option<f64>,
}

/// Intersection over union of two rectangles; 0 when disjoint.
pub fn iou(a: &BoxXywh, b: &BoxXywh) -> f64 {
    let iw = ((a.x + a.w).min(b.x + b.w) - a.x.max(b.x)).max(0.0);
    let ih = ((a.y + a.h).min(b.y + b.h) - a.y.max(b.y)).max(0.0);
    let inter = iw * ih;
    if inter <= 0.0 {
        return 0.0;
    }
    inter / (a.area() + b.area() - inter)
}

/// Detection indices in descending confidence, input order among equals.
fn confidence_order(dets: &[DetectionBox]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&i, &j| {
        let ci = dets[i].confidence.unwrap_or(0.0);
        let cj = dets[j].confidence.unwrap_or(0.0);
        cj.total_cmp(&ci).then(i.cmp(&j))
    });
    order
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Counts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct FrameMatch {
    pub counts: Counts,
    /// `(detection index, ground truth index, iou)`.
    pub pairs: Vec<(usize, usize, f64)>,
}

/// Tries to claim a ground truth for one detection. Returns the truth index
/// and IoU on success.
fn claim(det: &BoxXywh, truths: &[&BoxXywh], taken: &mut [bool], threshold: f64) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for (g, t) in truths.iter().enumerate() {
        if taken[g] {
            continue;
        }
        let v = iou(det, t);
        if best.is_none_or(|(_, b)| v > b) {
            best = Some((g, v));
        }
    }
    let (g, v) = best?;
    (v >= threshold).then(|| {
        taken[g] = true;
        (g, v)
    })
}

/// Matches one frame's detections to its ground truths.
///
/// Detections go in descending confidence; each claims the unmatched truth
/// with the highest IoU when that IoU reaches `threshold`, otherwise it is a
/// false positive. Unclaimed truths are false negatives.
pub fn match_frame(dets: &[DetectionBox], truths: &[GroundTruthBox], threshold: f64) -> FrameMatch {
    let truth_boxes: Vec<&BoxXywh> = truths.iter().map(|t| &t.bbox).collect();
    let mut taken = vec![false; truths.len()];
    let mut m = FrameMatch::default();
    for d in confidence_order(dets) {
        match claim(&dets[d].bbox, &truth_boxes, &mut taken, threshold) {
            Some((g, v)) => {
                m.counts.tp += 1;
                m.pairs.push((d, g, v));
            }
            None => m.counts.fp += 1,
        }
    }
    m.counts.fn_ = taken.iter().filter(|t| !**t).count() as u64;
    m
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Set when any ratio had a zero denominator and was reported as 0.
    pub degenerate: bool,
}

pub fn f1_score(precision: f64, recall: f64) -> Option<f64> {
    let d = precision + recall;
    (d > 0.0).then(|| 2.0 * precision * recall / d)
}

pub fn metrics(c: Counts) -> Metrics {
    let ratio = |num: u64, den: u64| (den > 0).then(|| num as f64 / den as f64);
    let p = ratio(c.tp, c.tp + c.fp);
    let r = ratio(c.tp, c.tp + c.fn_);
    let f = match (p, r) {
        (Some(p), Some(r)) => f1_score(p, r),
        _ => None,
    };
    Metrics {
        precision: p.unwrap_or(0.0),
        recall: r.unwrap_or(0.0),
        f1: f.unwrap_or(0.0),
        degenerate: p.is_none() || r.is_none() || f.is_none(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrPoint {
    pub recall: f64,
    pub precision: f64,
}

pub const RECALL_LEVELS: usize = 11;

/// Interpolated precision at recall 0.0, 0.1, ..., 1.0: the best precision
/// at any recall at or above the level, 0 when none.
pub fn eleven_point_precision(curve: &[PrPoint]) -> [f64; RECALL_LEVELS] {
    std::array::from_fn(|i| {
        let level = i as f64 / 10.0;
        curve
            .iter()
            .filter(|p| p.recall >= level)
            .map(|p| p.precision)
            .fold(0.0, f64::max)
    })
}

fn group_by_frame<T: Copy>(items: &[T], frame: impl Fn(&T) -> u64) -> BTreeMap<u64, Vec<(usize, T)>> {
    let mut m: BTreeMap<u64, Vec<(usize, T)>> = BTreeMap::new();
    for (i, it) in items.iter().enumerate() {
        m.entry(frame(it)).or_default().push((i, *it));
    }
    m
}

/// Precision-recall sweep over all detections in descending confidence and
/// the 11-point interpolated average precision.
pub fn average_precision(
    dets: &[DetectionBox],
    truths: &[GroundTruthBox],
    threshold: f64,
) -> Result<(f64, Vec<PrPoint>), EvalError> {
    if truths.is_empty() {
        return Err(EvalError::NoGroundTruth);
    }
    if dets.iter().any(|d| d.confidence.is_none()) {
        return Err(EvalError::NoConfidence);
    }
    let truths_by_frame = group_by_frame(truths, |t| t.frame);
    let truth_boxes: BTreeMap<u64, Vec<&BoxXywh>> = truths_by_frame
        .iter()
        .map(|(f, v)| (*f, v.iter().map(|(i, _)| &truths[*i].bbox).collect()))
        .collect();
    let mut taken: BTreeMap<u64, Vec<bool>> = truth_boxes.iter().map(|(f, v)| (*f, vec![false; v.len()])).collect();
    let total = truths.len() as f64;
    let (mut tp, mut fp) = (0u64, 0u64);
    let mut curve = Vec::with_capacity(dets.len());
    for d in confidence_order(dets) {
        let det = &dets[d];
        let hit = match (truth_boxes.get(&det.frame), taken.get_mut(&det.frame)) {
            (Some(boxes), Some(t)) => claim(&det.bbox, boxes, t, threshold).is_some(),
            _ => false,
        };
        if hit {
            tp += 1;
        } else {
            fp += 1;
        }
        curve.push(PrPoint {
            recall: tp as f64 / total,
            precision: tp as f64 / (tp + fp) as f64,
        });
    }
    let ap = eleven_point_precision(&curve).iter().sum::<f64>() / RECALL_LEVELS as f64;
    Ok((ap, curve))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub iou_threshold: f64,
    pub detections: usize,
    pub ground_truths: usize,
    #[serde(flatten)]
    pub counts: Counts,
    #[serde(flatten)]
    pub metrics: Metrics,
    /// Absent when detections lack confidence or there is no ground truth.
    pub ap: Option<f64>,
    pub pr_curve: Vec<PrPoint>,
    pub interpolated_precision: Option<[f64; RECALL_LEVELS]>,
}

/// Full evaluation over every frame.
pub fn evaluate(dets: &[DetectionBox], truths: &[GroundTruthBox], threshold: f64) -> EvalReport {
    let d_by_frame = group_by_frame(dets, |d| d.frame);
    let t_by_frame = group_by_frame(truths, |t| t.frame);
    let frames: BTreeSet<u64> = d_by_frame.keys().chain(t_by_frame.keys()).copied().collect();
    let mut counts = Counts::default();
    for f in frames {
        let fd: Vec<DetectionBox> = d_by_frame.get(&f).map(|v| v.iter().map(|(_, d)| *d).collect()).unwrap_or_default();
        let ft: Vec<GroundTruthBox> = t_by_frame.get(&f).map(|v| v.iter().map(|(_, t)| *t).collect()).unwrap_or_default();
        let m = match_frame(&fd, &ft, threshold);
        counts.tp += m.counts.tp;
        counts.fp += m.counts.fp;
        counts.fn_ += m.counts.fn_;
    }
    let (ap, pr_curve) = match average_precision(dets, truths, threshold) {
        Ok((ap, curve)) => (Some(ap), curve),
        Err(_) => (None, Vec::new()),
    };
    EvalReport {
        iou_threshold: threshold,
        detections: dets.len(),
        ground_truths: truths.len(),
        counts,
        metrics: metrics(counts),
        interpolated_precision: ap.map(|_| eleven_point_precision(&pr_curve)),
        ap,
        pr_curve,
    }
}

/// Face boxes in detection form, confidence 1.0.
pub fn face_boxes_as_detections(boxes: &[FaceBox]) -> Vec<DetectionBox> {
    boxes
        .iter()
        .map(|b| DetectionBox {
            frame: b.frame,
            bbox: BoxXywh::new(b.cx - b.side / 2.0, b.cy - b.side / 2.0, b.side, b.side),
            confidence: Some(1.0),
        })
        .collect()
}

fn csv_err(e: impl std::fmt::Display) -> EvalError {
    EvalError::Csv(e.to_string())
}

#[derive(Deserialize)]
struct TruthRow {
    frame: u64,
    x: f64,
    y: f64,
    w: f64,
    h: f64,
}

#[derive(Deserialize, Serialize)]
struct DetectionRow {
    frame: u64,
    x: f64,
    y: f64,
    w: f64,
    h: f64,
    confidence: Option<f64>,
}

fn check_box(row: usize, b: &BoxXywh) -> Result<(), EvalError> {
    if b.w > 0.0 && b.h > 0.0 {
        Ok(())
    } else {
        Err(EvalError::InvalidBox {
            row,
            message: format!("non-positive size {}x{}", b.w, b.h),
        })
    }
}

/// Reads `frame,x,y,w,h` ground truth CSV.
pub fn read_ground_truth(path: &Path) -> Result<Vec<GroundTruthBox>, EvalError> {
    let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path).map_err(csv_err)?;
    let mut out = Vec::new();
    for (i, row) in r.deserialize::<TruthRow>().enumerate() {
        let row = row.map_err(csv_err)?;
        let bbox = BoxXywh::new(row.x, row.y, row.w, row.h);
        check_box(i + 1, &bbox)?;
        out.push(GroundTruthBox { frame: row.frame, bbox });
    }
    Ok(out)
}

/// Reads `frame,x,y,w,h,confidence` detection CSV; confidence may be blank.
pub fn read_detections(path: &Path) -> Result<Vec<DetectionBox>, EvalError> {
    let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path).map_err(csv_err)?;
    let mut out = Vec::new();
    for (i, row) in r.deserialize::<DetectionRow>().enumerate() {
        let row = row.map_err(csv_err)?;
        let bbox = BoxXywh::new(row.x, row.y, row.w, row.h);
        check_box(i + 1, &bbox)?;
        if let Some(c) = row.confidence {
            if !(0.0..=1.0).contains(&c) {
                return Err(EvalError::InvalidBox {
                    row: i + 1,
                    message: format!("confidence {c} outside [0, 1]"),
                });
            }
        }
        out.push(DetectionBox {
            frame: row.frame,
            bbox,
            confidence: row.confidence,
        });
    }
    Ok(out)
}

pub fn write_detections(path: &Path, dets: &[DetectionBox]) -> Result<(), EvalError> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    for d in dets {
        w.serialize(DetectionRow {
            frame: d.frame,
            x: d.bbox.x,
            y: d.bbox.y,
            w: d.bbox.w,
            h: d.bbox.h,
            confidence: d.confidence,
        })
        .map_err(csv_err)?;
    }
    w.flush().map_err(csv_err)
}

/// Writes the raw sweep and the 11-point interpolated curve as one CSV with a
/// `kind` column (`sweep` or `interpolated`).
pub fn write_pr_curve(path: &Path, report: &EvalReport) -> Result<(), EvalError> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(["kind", "recall", "precision"]).map_err(csv_err)?;
    for p in &report.pr_curve {
        w.write_record(["sweep".to_string(), p.recall.to_string(), p.precision.to_string()])
            .map_err(csv_err)?;
    }
    if let Some(ip) = &report.interpolated_precision {
        for (i, p) in ip.iter().enumerate() {
            w.write_record(["interpolated".to_string(), (i as f64 / 10.0).to_string(), p.to_string()])
                .map_err(csv_err)?;
        }
    }
    w.flush().map_err(csv_err)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KeypointDiff {
    pub index: usize,
    pub mean_confidence_a: Option<f64>,
    pub mean_confidence_b: Option<f64>,
    /// Mean distance over pairs where both keypoints were detected.
    pub mean_error: Option<f64>,
    pub compared: usize,
}

/// Per-keypoint comparison of two pose sets over the same frames, people
/// paired by track id. People present on only one side are ignored.
pub fn keypoint_diff(a: &[FramePose], b: &[FramePose]) -> Result<Vec<KeypointDiff>, EvalError> {
    let fa: BTreeMap<u64, &FramePose> = a.iter().map(|f| (f.frame_index, f)).collect();
    let fb: BTreeMap<u64, &FramePose> = b.iter().map(|f| (f.frame_index, f)).collect();
    let only_a: Vec<u64> = fa.keys().filter(|k| !fb.contains_key(k)).copied().collect();
    let only_b: Vec<u64> = fb.keys().filter(|k| !fa.contains_key(k)).copied().collect();
    if !only_a.is_empty() || !only_b.is_empty() {
        return Err(EvalError::Misaligned { only_a, only_b });
    }
    let mut conf_a = [0.0; KEYPOINT_COUNT];
    let mut conf_b = [0.0; KEYPOINT_COUNT];
    let mut err = [0.0; KEYPOINT_COUNT];
    let mut err_n = [0usize; KEYPOINT_COUNT];
    let mut pairs = 0usize;
    for (f, pa) in &fa {
        let pb = fb[f];
        for person in &pa.people {
            let Some(id) = person.track_id else { continue };
            let Some(other) = pb.people.iter().find(|p| p.track_id == Some(id)) else {
                continue;
            };
            pairs += 1;
            for k in 0..KEYPOINT_COUNT {
                let (ka, kb) = (person.skeleton.keypoints[k], other.skeleton.keypoints[k]);
                conf_a[k] += ka.c;
                conf_b[k] += kb.c;
                if ka.is_detected() && kb.is_detected() {
                    err[k] += ka.point().distance(&kb.point());
                    err_n[k] += 1;
                }
            }
        }
    }
    Ok((0..KEYPOINT_COUNT)
        .map(|k| KeypointDiff {
            index: k,
            mean_confidence_a: (pairs > 0).then(|| conf_a[k] / pairs as f64),
            mean_confidence_b: (pairs > 0).then(|| conf_b[k] / pairs as f64),
            mean_error: (err_n[k] > 0).then(|| err[k] / err_n[k] as f64),
            compared: err_n[k],
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Keypoint, Person, Skeleton};

    fn b(x: f64, y: f64, w: f64, h: f64) -> BoxXywh {
        BoxXywh::new(x, y, w, h)
    }

    fn gt(frame: u64, bbox: BoxXywh) -> GroundTruthBox {
        GroundTruthBox { frame, bbox }
    }

    fn det(frame: u64, bbox: BoxXywh, c: f64) -> DetectionBox {
        DetectionBox { frame, bbox, confidence: Some(c) }
    }

    #[test]
    fn iou_cases() {
        let a = b(0.0, 0.0, 10.0, 10.0);
        assert_eq!(iou(&a, &a), 1.0);
        assert_eq!(iou(&a, &b(20.0, 20.0, 5.0, 5.0)), 0.0);
        assert_eq!(iou(&a, &b(10.0, 0.0, 5.0, 5.0)), 0.0);
        assert!((iou(&a, &b(5.0, 0.0, 10.0, 10.0)) - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn match_exact() {
        let m = match_frame(&[det(0, b(0.0, 0.0, 5.0, 5.0), 0.9)], &[gt(0, b(0.0, 0.0, 5.0, 5.0))], 0.5);
        assert_eq!(m.counts, Counts { tp: 1, fp: 0, fn_: 0 });
    }

    #[test]
    fn duplicate_detection_is_fp() {
        let d = det(0, b(0.0, 0.0, 5.0, 5.0), 0.9);
        let m = match_frame(&[d, d], &[gt(0, b(0.0, 0.0, 5.0, 5.0))], 0.5);
        assert_eq!(m.counts, Counts { tp: 1, fp: 1, fn_: 0 });
    }

    #[test]
    fn no_detections_all_fn() {
        let m = match_frame(&[], &[gt(0, b(0.0, 0.0, 5.0, 5.0)), gt(0, b(9.0, 9.0, 5.0, 5.0))], 0.5);
        assert_eq!(m.counts, Counts { tp: 0, fp: 0, fn_: 2 });
    }

    #[test]
    fn higher_confidence_claims_first() {
        // Both detections overlap the single truth; the 0.9 one must win even
        // though the 0.4 one is listed first and overlaps better.
        let truth = gt(0, b(0.0, 0.0, 10.0, 10.0));
        let low = det(0, b(0.0, 0.0, 10.0, 10.0), 0.4);
        let high = det(0, b(1.0, 0.0, 10.0, 10.0), 0.9);
        let m = match_frame(&[low, high], &[truth], 0.5);
        assert_eq!(m.pairs[0].0, 1);
    }

    #[test]
    fn below_threshold_is_fp_and_fn() {
        let m = match_frame(&[det(0, b(0.0, 0.0, 10.0, 10.0), 1.0)], &[gt(0, b(6.0, 0.0, 10.0, 10.0))], 0.5);
        assert_eq!(m.counts, Counts { tp: 0, fp: 1, fn_: 1 });
    }

    #[test]
    fn metric_values() {
        let m = metrics(Counts { tp: 8, fp: 2, fn_: 8 });
        assert_eq!((m.precision, m.recall), (0.8, 0.5));
        assert!((m.f1 - 2.0 * 0.4 / 1.3).abs() < 1e-15);
        assert!(!m.degenerate);
        let z = metrics(Counts::default());
        assert_eq!((z.precision, z.recall, z.f1, z.degenerate), (0.0, 0.0, 0.0, true));
    }

    #[test]
    fn f1_from_published_rows() {
        let round3 = |v: f64| (v * 1000.0).round() / 1000.0;
        assert_eq!(round3(f1_score(0.992, 0.990).unwrap()), 0.991);
        assert_eq!(round3(f1_score(0.850, 0.579).unwrap()), 0.689);
    }

    #[test]
    fn perfect_detector_ap_one() {
        let truths: Vec<_> = (0..5).map(|f| gt(f, b(1.0, 1.0, 4.0, 4.0))).collect();
        let dets: Vec<_> = truths.iter().map(|t| det(t.frame, t.bbox, 1.0)).collect();
        assert_eq!(average_precision(&dets, &truths, 0.5).unwrap().0, 1.0);
    }

    #[test]
    fn zero_detections_ap_zero() {
        let truths = vec![gt(0, b(1.0, 1.0, 4.0, 4.0))];
        let (ap, curve) = average_precision(&[], &truths, 0.5).unwrap();
        assert_eq!(ap, 0.0);
        assert!(curve.is_empty());
    }

    #[test]
    fn ap_hand_trace() {
        let t1 = b(0.0, 0.0, 10.0, 10.0);
        let t2 = b(50.0, 50.0, 10.0, 10.0);
        let truths = vec![gt(0, t1), gt(0, t2)];
        let dets = vec![det(0, t1, 0.9), det(0, b(100.0, 100.0, 5.0, 5.0), 0.8), det(0, t2, 0.7)];
        let (ap, curve) = average_precision(&dets, &truths, 0.5).unwrap();
        let pts: Vec<(f64, f64)> = curve.iter().map(|p| (p.recall, p.precision)).collect();
        assert_eq!(pts, vec![(0.5, 1.0), (0.5, 0.5), (1.0, 2.0 / 3.0)]);
        assert!((ap - (6.0 + 5.0 * 2.0 / 3.0) / 11.0).abs() < 1e-12);
        assert!((ap - 0.8485).abs() < 1e-4);
    }

    #[test]
    fn ap_errors() {
        assert_eq!(average_precision(&[], &[], 0.5), Err(EvalError::NoGroundTruth));
        let truths = vec![gt(0, b(1.0, 1.0, 4.0, 4.0))];
        let no_conf = vec![DetectionBox { frame: 0, bbox: b(1.0, 1.0, 4.0, 4.0), confidence: None }];
        assert_eq!(average_precision(&no_conf, &truths, 0.5), Err(EvalError::NoConfidence));
        let rep = evaluate(&no_conf, &truths, 0.5);
        assert_eq!(rep.ap, None);
        assert_eq!(rep.counts.tp, 1);
    }

    #[test]
    fn evaluate_counts_match_totals() {
        let truths = vec![gt(0, b(0.0, 0.0, 10.0, 10.0)), gt(1, b(0.0, 0.0, 10.0, 10.0)), gt(2, b(5.0, 5.0, 5.0, 5.0))];
        let dets = vec![det(0, b(0.0, 0.0, 10.0, 10.0), 0.5), det(1, b(30.0, 0.0, 10.0, 10.0), 0.6), det(3, b(0.0, 0.0, 1.0, 1.0), 0.1)];
        let rep = evaluate(&dets, &truths, 0.5);
        assert_eq!(rep.counts, Counts { tp: 1, fp: 2, fn_: 2 });
        assert_eq!(rep.counts.tp + rep.counts.fn_, truths.len() as u64);
        assert_eq!(rep.counts.tp + rep.counts.fp, dets.len() as u64);
    }

    #[test]
    fn csv_io() {
        let dir = tempfile::tempdir().unwrap();
        let g = dir.path().join("gt.csv");
        std::fs::write(&g, "frame,x,y,w,h\n0,1,2,3,4\n5, 1.5, 2, 3, 4\n").unwrap();
        let truths = read_ground_truth(&g).unwrap();
        assert_eq!(truths[1], gt(5, b(1.5, 2.0, 3.0, 4.0)));
        let d = dir.path().join("det.csv");
        std::fs::write(&d, "frame,x,y,w,h,confidence\n0,1,2,3,4,0.5\n1,1,2,3,4,\n").unwrap();
        let dets = read_detections(&d).unwrap();
        assert_eq!(dets[0].confidence, Some(0.5));
        assert_eq!(dets[1].confidence, None);
        let d2 = dir.path().join("det2.csv");
        write_detections(&d2, &dets).unwrap();
        assert_eq!(read_detections(&d2).unwrap(), dets);
        std::fs::write(&g, "frame,x,y,w,h\n0,1,2,0,4\n").unwrap();
        assert!(matches!(read_ground_truth(&g), Err(EvalError::InvalidBox { row: 1, .. })));
    }

    fn frame_with(index: u64, id: u32, x: f64, y: f64) -> FramePose {
        let s = Skeleton::new([Keypoint::new(x, y, 0.8); KEYPOINT_COUNT]);
        FramePose::new(index, vec![Person { skeleton: s, track_id: Some(id) }])
    }

    #[test]
    fn keypoint_diff_identity_and_shift() {
        let a: Vec<_> = (0..4).map(|f| frame_with(f, 0, 10.0 * f as f64, 5.0)).collect();
        let same = keypoint_diff(&a, &a).unwrap();
        assert!(same.iter().all(|d| d.mean_error == Some(0.0) && d.mean_confidence_a == d.mean_confidence_b));
        let b: Vec<_> = (0..4).map(|f| frame_with(f, 0, 10.0 * f as f64 + 3.0, 9.0)).collect();
        assert!(keypoint_diff(&a, &b).unwrap().iter().all(|d| d.mean_error == Some(5.0)));
    }

    #[test]
    fn keypoint_diff_misaligned() {
        let a = vec![frame_with(0, 0, 1.0, 1.0), frame_with(1, 0, 1.0, 1.0)];
        let b = vec![frame_with(0, 0, 1.0, 1.0), frame_with(2, 0, 1.0, 1.0)];
        assert_eq!(keypoint_diff(&a, &b), Err(EvalError::Misaligned { only_a: vec![1], only_b: vec![2] }));
    }
}
