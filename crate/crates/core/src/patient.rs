//! Patient identification: among tracks present in enough of the video, the
//! one whose centroid stays closest to the frame center on average.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Track, VideoGeometry};

pub const DEFAULT_PRESENCE_THRESHOLD: f64 = 0.8;

#[derive(Debug, Error, PartialEq)]
pub enum PatientError {
    #[error("no tracks to choose from")]
    NoTracks,
    #[error("presence threshold {0} outside (0, 1]")]
    BadThreshold(f64),
    #[error("no track is present in at least {:.0}% of frames; use all-person blurring", threshold * 100.0)]
    NoPatient { threshold: f64, scores: Vec<TrackScore> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackScore {
    pub track_id: u32,
    pub presence_ratio: f64,
    /// Mean centroid distance to frame center; `None` if the track never had
    /// a defined centroid.
    pub mean_center_distance: Option<f64>,
    pub eligible: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatientSelection {
    pub patient: u32,
    pub scores: Vec<TrackScore>,
}

pub fn score_tracks(tracks: &[Track], geom: &VideoGeometry, presence_threshold: f64) -> Vec<TrackScore> {
    let center = geom.center();
    tracks
        .iter()
        .map(|t| {
            let dists: Vec<f64> = t
                .frames
                .values()
                .filter_map(|s| s.centroid())
                .map(|c| c.distance(&center))
                .collect();
            let mean = (!dists.is_empty()).then(|| dists.iter().sum::<f64>() / dists.len() as f64);
            TrackScore {
                track_id: t.track_id,
                presence_ratio: t.presence_ratio,
                mean_center_distance: mean,
                eligible: t.presence_ratio >= presence_threshold && mean.is_some(),
            }
        })
        .collect()
}

/// Picks the patient track. Ties go to the lower track id.
pub fn identify_patient(
    tracks: &[Track],
    geom: &VideoGeometry,
    presence_threshold: f64,
) -> Result<PatientSelection, PatientError> {
    if tracks.is_empty() {
        return Err(PatientError::NoTracks);
    }
    if !(presence_threshold > 0.0 && presence_threshold <= 1.0) {
        return Err(PatientError::BadThreshold(presence_threshold));
    }
    let scores = score_tracks(tracks, geom, presence_threshold);
    let best = scores
        .iter()
        .filter(|s| s.eligible)
        .min_by(|a, b| {
            a.mean_center_distance
                .unwrap()
                .total_cmp(&b.mean_center_distance.unwrap())
                .then(a.track_id.cmp(&b.track_id))
        })
        .map(|s| s.track_id);
    match best {
        Some(patient) => Ok(PatientSelection { patient, scores }),
        None => Err(PatientError::NoPatient {
            threshold: presence_threshold,
            scores,
        }),
    }
}
