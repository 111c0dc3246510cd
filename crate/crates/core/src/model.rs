//! Shared domain types: keypoints, skeletons, per-frame poses, tracks and
//! video geometry, plus the BODY_25 index map.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

/// Number of keypoints in a BODY_25 skeleton.
pub const KEYPOINT_COUNT: usize = 25;

/// Keypoints with confidence at or above this value are treated as reliable.
pub const CONFIDENCE_THRESHOLD: f64 = 0.5;

/// BODY_25 keypoint indices.
pub mod body25 {
    pub const NOSE: usize = 0;
    pub const NECK: usize = 1;
    pub const R_SHOULDER: usize = 2;
    pub const R_ELBOW: usize = 3;
    pub const R_WRIST: usize = 4;
    pub const L_SHOULDER: usize = 5;
    pub const L_ELBOW: usize = 6;
    pub const L_WRIST: usize = 7;
    pub const MID_HIP: usize = 8;
    pub const R_HIP: usize = 9;
    pub const R_KNEE: usize = 10;
    pub const R_ANKLE: usize = 11;
    pub const L_HIP: usize = 12;
    pub const L_KNEE: usize = 13;
    pub const L_ANKLE: usize = 14;
    pub const R_EYE: usize = 15;
    pub const L_EYE: usize = 16;
    pub const R_EAR: usize = 17;
    pub const L_EAR: usize = 18;
    pub const L_BIG_TOE: usize = 19;
    pub const L_SMALL_TOE: usize = 20;
    pub const L_HEEL: usize = 21;
    pub const R_BIG_TOE: usize = 22;
    pub const R_SMALL_TOE: usize = 23;
    pub const R_HEEL: usize = 24;

    /// Facial keypoints: nose, eyes and ears.
    pub const FACE: [usize; 5] = [NOSE, R_EYE, L_EYE, R_EAR, L_EAR];

    pub const NAMES: [&str; super::KEYPOINT_COUNT] = [
        "Nose",
        "Neck",
        "RShoulder",
        "RElbow",
        "RWrist",
        "LShoulder",
        "LElbow",
        "LWrist",
        "MidHip",
        "RHip",
        "RKnee",
        "RAnkle",
        "LHip",
        "LKnee",
        "LAnkle",
        "REye",
        "LEye",
        "REar",
        "LEar",
        "LBigToe",
        "LSmallToe",
        "LHeel",
        "RBigToe",
        "RSmallToe",
        "RHeel",
    ];
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// One keypoint estimate. An undetected keypoint is `(0, 0, 0)`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Keypoint {
    pub x: f64,
    pub y: f64,
    pub c: f64,
}

impl Keypoint {
    pub const UNDETECTED: Keypoint = Keypoint { x: 0.0, y: 0.0, c: 0.0 };

    pub fn new(x: f64, y: f64, c: f64) -> Self {
        Self { x, y, c }
    }

    pub fn is_detected(&self) -> bool {
        *self != Self::UNDETECTED
    }

    pub fn is_reliable(&self) -> bool {
        self.c >= CONFIDENCE_THRESHOLD
    }

    pub fn point(&self) -> Point {
        Point::new(self.x, self.y)
    }
}

/// A single person's 25 keypoints in one frame.
///
/// `interpolated` is a bitmask over keypoint indices marking values that
/// were synthesized by gap filling rather than measured.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Skeleton {
    pub keypoints: [Keypoint; KEYPOINT_COUNT],
    pub interpolated: u32,
}

impl Default for Skeleton {
    fn default() -> Self {
        Self {
            keypoints: [Keypoint::UNDETECTED; KEYPOINT_COUNT],
            interpolated: 0,
        }
    }
}

impl Skeleton {
    pub fn new(keypoints: [Keypoint; KEYPOINT_COUNT]) -> Self {
        Self {
            keypoints,
            interpolated: 0,
        }
    }

    /// Builds a skeleton from a flat `x, y, c` array of exactly 75 values.
    pub fn from_flat(values: &[f64]) -> Option<Self> {
        if values.len() != KEYPOINT_COUNT * 3 {
            return None;
        }
        let mut keypoints = [Keypoint::UNDETECTED; KEYPOINT_COUNT];
        for (kp, chunk) in keypoints.iter_mut().zip(values.chunks_exact(3)) {
            *kp = Keypoint::new(chunk[0], chunk[1], chunk[2]);
        }
        Some(Self::new(keypoints))
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.keypoints.iter().flat_map(|k| [k.x, k.y, k.c]).collect()
    }

    pub fn is_interpolated(&self, index: usize) -> bool {
        self.interpolated & (1 << index) != 0
    }

    pub fn interpolated_indices(&self) -> Vec<usize> {
        (0..KEYPOINT_COUNT).filter(|&i| self.is_interpolated(i)).collect()
    }

    /// Mean position of all keypoints with confidence >= 0.5.
    pub fn centroid(&self) -> Option<Point> {
        mean_point(self.keypoints.iter().filter(|k| k.is_reliable()))
    }

    /// Mean position of every detected keypoint regardless of confidence.
    pub fn detected_centroid(&self) -> Option<Point> {
        mean_point(self.keypoints.iter().filter(|k| k.is_detected()))
    }

    /// Translates every detected keypoint by `(dx, dy)`.
    pub fn shifted(&self, dx: f64, dy: f64) -> Self {
        let mut out = *self;
        for kp in out.keypoints.iter_mut().filter(|k| k.is_detected()) {
            kp.x += dx;
            kp.y += dy;
        }
        out
    }
}

fn mean_point<'a>(points: impl Iterator<Item = &'a Keypoint>) -> Option<Point> {
    let (n, sx, sy) = points.fold((0usize, 0.0, 0.0), |(n, sx, sy), k| (n + 1, sx + k.x, sy + k.y));
    (n > 0).then(|| Point::new(sx / n as f64, sy / n as f64))
}

/// Free-function form of [`Skeleton::centroid`].
pub fn centroid(skeleton: &Skeleton) -> Option<Point> {
    skeleton.centroid()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Person {
    pub skeleton: Skeleton,
    pub track_id: Option<u32>,
}

impl Person {
    pub fn untracked(skeleton: Skeleton) -> Self {
        Self {
            skeleton,
            track_id: None,
        }
    }
}

/// All people detected in one frame, in estimator output order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FramePose {
    pub frame_index: u64,
    pub people: Vec<Person>,
}

impl FramePose {
    pub fn new(frame_index: u64, people: Vec<Person>) -> Self {
        Self { frame_index, people }
    }
}

/// One person's identity and skeleton sequence across a video.
#[derive(Debug, Clone, PartialEq)]
pub struct Track {
    pub track_id: u32,
    pub frames: BTreeMap<u64, Skeleton>,
    pub presence_ratio: f64,
}

impl Track {
    pub fn new(track_id: u32) -> Self {
        Self {
            track_id,
            frames: BTreeMap::new(),
            presence_ratio: 0.0,
        }
    }

    pub fn update_presence(&mut self, total_frames: u64) {
        self.presence_ratio = if total_frames == 0 {
            0.0
        } else {
            (self.frames.len() as f64 / total_frames as f64).min(1.0)
        };
    }
}

/// Groups tracked frame poses into per-identity tracks.
///
/// People without a `track_id` are ignored. `total_frames` is the presence
/// denominator.
pub fn tracks_from_frames(frames: &[FramePose], total_frames: u64) -> Vec<Track> {
    let mut by_id: BTreeMap<u32, Track> = BTreeMap::new();
    for frame in frames {
        for person in &frame.people {
            if let Some(id) = person.track_id {
                by_id
                    .entry(id)
                    .or_insert_with(|| Track::new(id))
                    .frames
                    .insert(frame.frame_index, person.skeleton);
            }
        }
    }
    let mut tracks: Vec<Track> = by_id.into_values().collect();
    for t in &mut tracks {
        t.update_presence(total_frames);
    }
    tracks
}

/// Writes per-track skeletons back into the matching frame entries.
///
/// Entries are matched by `(frame_index, track_id)`; anything not covered by
/// a track is left untouched.
pub fn apply_tracks_to_frames(frames: &mut [FramePose], tracks: &[Track]) {
    let by_id: BTreeMap<u32, &Track> = tracks.iter().map(|t| (t.track_id, t)).collect();
    for frame in frames.iter_mut() {
        for person in frame.people.iter_mut() {
            let Some(id) = person.track_id else { continue };
            if let Some(s) = by_id.get(&id).and_then(|t| t.frames.get(&frame.frame_index)) {
                person.skeleton = *s;
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VideoGeometry {
    pub width: u32,
    pub height: u32,
    pub frame_count: u64,
    pub fps: f64,
}

impl VideoGeometry {
    /// Returns `None` unless every field is positive.
    pub fn new(width: u32, height: u32, frame_count: u64, fps: f64) -> Option<Self> {
        (width > 0 && height > 0 && frame_count > 0 && fps > 0.0).then_some(Self {
            width,
            height,
            frame_count,
            fps,
        })
    }

    pub fn diagonal(&self) -> f64 {
        (self.width as f64).hypot(self.height as f64)
    }

    pub fn center(&self) -> Point {
        Point::new(self.width as f64 / 2.0, self.height as f64 / 2.0)
    }
}
