//! Centroid tracking: assigns every person a stable identity by comparing
//! their body centroid with each track's centroid averaged over the previous
//! five frames.

use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{tracks_from_frames, FramePose, Point, Skeleton, Track, VideoGeometry};

/// Number of preceding frames whose centroids inform a match.
pub const HISTORY_WINDOW: u64 = 5;

/// Default new-person distance, as a fraction of the frame diagonal.
pub const DEFAULT_THRESHOLD_FRACTION: f64 = 0.15;

#[derive(Debug, Error, PartialEq)]
pub enum TrackingError {
    #[error("no frames to track")]
    EmptyInput,
    #[error("threshold fraction {0} outside (0, 1]")]
    BadThreshold(f64),
    #[error("frame {current} follows frame {previous}; frames must be strictly increasing")]
    Unordered { previous: u64, current: u64 },
}

/// A new identity was created.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NewTrackEvent {
    pub frame_index: u64,
    pub track_id: u32,
}

#[derive(Debug, Clone)]
pub struct TrackerState {
    next_id: u32,
    history: BTreeMap<u32, VecDeque<(u64, Point)>>,
    threshold: f64,
}

impl TrackerState {
    /// `threshold` is in pixels.
    pub fn new(threshold: f64) -> Self {
        Self {
            next_id: 0,
            history: BTreeMap::new(),
            threshold,
        }
    }

    pub fn next_id(&self) -> u32 {
        self.next_id
    }

    /// Averaged centroid of every track seen within the window before `frame`.
    pub fn averaged_centroids(&self, frame: u64) -> Vec<(u32, Point)> {
        let oldest = frame.saturating_sub(HISTORY_WINDOW);
        self.history
            .iter()
            .filter_map(|(&id, h)| {
                let recent: Vec<Point> = h.iter().filter(|(f, _)| *f >= oldest && *f < frame).map(|(_, p)| *p).collect();
                if recent.is_empty() {
                    return None;
                }
                let n = recent.len() as f64;
                let (sx, sy) = recent.iter().fold((0.0, 0.0), |(a, b), p| (a + p.x, b + p.y));
                Some((id, Point::new(sx / n, sy / n)))
            })
            .collect()
    }

    /// Assigns ids to one frame's skeletons, in input order.
    pub fn step(&mut self, frame: u64, skeletons: &[Skeleton]) -> (Vec<u32>, Vec<NewTrackEvent>) {
        let tracks = self.averaged_centroids(frame);
        let centroids: Vec<Option<Point>> = skeletons.iter().map(person_centroid).collect();

        let mut candidates: Vec<(f64, u32, usize)> = Vec::new();
        for (p, c) in centroids.iter().enumerate() {
            let Some(c) = c else { continue };
            for (id, avg) in &tracks {
                let d = c.distance(avg);
                if d <= self.threshold {
                    candidates.push((d, *id, p));
                }
            }
        }
        candidates.sort_by(|a, b| {
            a.0.total_cmp(&b.0)
                .then(a.1.cmp(&b.1))
                .then(a.2.cmp(&b.2))
        });

        let mut assigned: Vec<Option<u32>> = vec![None; skeletons.len()];
        let mut used_tracks = Vec::new();
        for (_, id, p) in candidates {
            if assigned[p].is_none() && !used_tracks.contains(&id) {
                assigned[p] = Some(id);
                used_tracks.push(id);
            }
        }

        let mut events = Vec::new();
        let ids: Vec<u32> = assigned
            .into_iter()
            .map(|a| {
                a.unwrap_or_else(|| {
                    let id = self.next_id;
                    self.next_id += 1;
                    events.push(NewTrackEvent {
                        frame_index: frame,
                        track_id: id,
                    });
                    id
                })
            })
            .collect();

        let oldest = frame.saturating_sub(HISTORY_WINDOW - 1);
        for (id, c) in ids.iter().zip(&centroids) {
            if let Some(c) = c {
                self.history.entry(*id).or_default().push_back((frame, *c));
            }
        }
        for h in self.history.values_mut() {
            while h.front().is_some_and(|(f, _)| *f < oldest) {
                h.pop_front();
            }
        }
        self.history.retain(|_, h| !h.is_empty());
        (ids, events)
    }
}

/// Centroid used for matching: confident keypoints first, then any detected
/// keypoint when no confident one exists.
fn person_centroid(s: &Skeleton) -> Option<Point> {
    s.centroid().or_else(|| s.detected_centroid())
}

#[derive(Debug, Clone)]
pub struct TrackingOutput {
    pub frames: Vec<FramePose>,
    pub tracks: Vec<Track>,
    pub new_tracks: Vec<NewTrackEvent>,
}

impl TrackingOutput {
    /// Recomputes presence ratios against a different frame count.
    pub fn rebase_presence(&mut self, total_frames: u64) {
        for t in &mut self.tracks {
            t.update_presence(total_frames);
        }
    }
}

/// Assigns a track id to every person in every frame.
///
/// People in the first frame get ids 0, 1, 2, ... in file order. After that
/// each person is matched to the nearest averaged track centroid, one-to-one,
/// with pairs accepted in ascending distance (lower track id first on ties).
/// A person with no track within `threshold_fraction` of the frame diagonal
/// gets a fresh id; ids are never reused.
pub fn assign_ids(
    frames: &[FramePose],
    geom: &VideoGeometry,
    threshold_fraction: f64,
) -> Result<TrackingOutput, TrackingError> {
    if frames.is_empty() {
        return Err(TrackingError::EmptyInput);
    }
    if !(threshold_fraction > 0.0 && threshold_fraction <= 1.0) {
        return Err(TrackingError::BadThreshold(threshold_fraction));
    }
    if let Some(w) = frames.windows(2).find(|w| w[1].frame_index <= w[0].frame_index) {
        return Err(TrackingError::Unordered {
            previous: w[0].frame_index,
            current: w[1].frame_index,
        });
    }

    let mut state = TrackerState::new(threshold_fraction * geom.diagonal());
    let mut out = frames.to_vec();
    let mut new_tracks = Vec::new();
    for frame in &mut out {
        let skeletons: Vec<Skeleton> = frame.people.iter().map(|p| p.skeleton).collect();
        let (ids, events) = state.step(frame.frame_index, &skeletons);
        for (person, id) in frame.people.iter_mut().zip(ids) {
            person.track_id = Some(id);
        }
        new_tracks.extend(events);
    }
    let tracks = tracks_from_frames(&out, geom.frame_count);
    Ok(TrackingOutput {
        frames: out,
        tracks,
        new_tracks,
    })
}
