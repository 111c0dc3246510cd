//! Gap filling for unreliable keypoints along a track.
//!
//! Each keypoint index is repaired independently: observations below the
//! confidence threshold are replaced by per-axis linear interpolation between
//! the bounding good observations, and runs at either end of the track hold
//! the nearest good value. Good observations are never touched.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{body25, Keypoint, Track, CONFIDENCE_THRESHOLD, KEYPOINT_COUNT};

pub const DEFAULT_CONFIDENCE_THRESHOLD: f64 = CONFIDENCE_THRESHOLD;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InterpolationScope {
    FaceOnly,
    WholeBody,
}

impl InterpolationScope {
    pub fn indices(&self) -> &'static [usize] {
        const ALL: [usize; KEYPOINT_COUNT] = {
            let mut a = [0; KEYPOINT_COUNT];
            let mut i = 0;
            while i < KEYPOINT_COUNT {
                a[i] = i;
                i += 1;
            }
            a
        };
        match self {
            Self::FaceOnly => &body25::FACE,
            Self::WholeBody => &ALL,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum InterpolationError {
    #[error("confidence threshold {0} outside (0, 1)")]
    BadThreshold(f64),
    #[error("track {track_id}: facial keypoints {indices:?} are never reliably observed")]
    UnrecoverableFace { track_id: u32, indices: Vec<usize> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BadReason {
    Undetected,
    LowConfidence,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Repair {
    /// Linear between two good observations.
    Interpolated,
    /// Copied from the nearest good observation at a track boundary.
    Held,
    /// No good observation anywhere in the track; left as-is.
    Unrecoverable,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BadObservation {
    pub frame: u64,
    pub track_id: u32,
    pub keypoint: usize,
    pub confidence: f64,
    pub reason: BadReason,
    pub repair: Repair,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct InterpolationReport {
    pub bad: Vec<BadObservation>,
    /// `(track_id, keypoint index)` pairs with no good observation.
    pub unrecoverable: Vec<(u32, usize)>,
}

impl InterpolationReport {
    pub fn merge(&mut self, other: InterpolationReport) {
        self.bad.extend(other.bad);
        self.unrecoverable.extend(other.unrecoverable);
    }

    /// Errors if any facial keypoint of any track could not be recovered.
    pub fn require_face_complete(&self) -> Result<(), InterpolationError> {
        let mut face: Vec<(u32, usize)> = self
            .unrecoverable
            .iter()
            .copied()
            .filter(|(_, k)| body25::FACE.contains(k))
            .collect();
        face.sort_unstable();
        match face.first() {
            None => Ok(()),
            Some(&(track_id, _)) => Err(InterpolationError::UnrecoverableFace {
                track_id,
                indices: face.iter().filter(|(t, _)| *t == track_id).map(|(_, k)| *k).collect(),
            }),
        }
    }
}

fn lerp(a: f64, b: f64, t: f64) -> f64 {
    a + (b - a) * t
}

/// Repairs one track's keypoints within `scope`.
pub fn interpolate_track(
    track: &Track,
    scope: InterpolationScope,
    conf_threshold: f64,
) -> Result<(Track, InterpolationReport), InterpolationError> {
    if !(conf_threshold > 0.0 && conf_threshold < 1.0) {
        return Err(InterpolationError::BadThreshold(conf_threshold));
    }
    let frames: Vec<u64> = track.frames.keys().copied().collect();
    let mut skeletons: Vec<_> = track.frames.values().copied().collect();
    let mut report = InterpolationReport::default();

    for &k in scope.indices() {
        let good: Vec<usize> = (0..frames.len())
            .filter(|&i| skeletons[i].keypoints[k].c >= conf_threshold)
            .collect();
        let mut record = |i: usize, kp: &Keypoint, repair: Repair| {
            report.bad.push(BadObservation {
                frame: frames[i],
                track_id: track.track_id,
                keypoint: k,
                confidence: kp.c,
                reason: if kp.is_detected() {
                    BadReason::LowConfidence
                } else {
                    BadReason::Undetected
                },
                repair,
            });
        };

        if good.is_empty() {
            for (i, s) in skeletons.iter().enumerate() {
                record(i, &s.keypoints[k], Repair::Unrecoverable);
            }
            if !frames.is_empty() {
                report.unrecoverable.push((track.track_id, k));
            }
            continue;
        }

        let mut next_good = 0usize;
        for i in 0..frames.len() {
            if next_good < good.len() && good[next_good] == i {
                next_good += 1;
                continue;
            }
            let before = next_good.checked_sub(1).map(|g| good[g]);
            let after = good.get(next_good).copied();
            let original = skeletons[i].keypoints[k];
            let (x, y, repair) = match (before, after) {
                (Some(a), Some(b)) => {
                    let ka = skeletons[a].keypoints[k];
                    let kb = skeletons[b].keypoints[k];
                    let t = (frames[i] - frames[a]) as f64 / (frames[b] - frames[a]) as f64;
                    (lerp(ka.x, kb.x, t), lerp(ka.y, kb.y, t), Repair::Interpolated)
                }
                (Some(g), None) | (None, Some(g)) => {
                    let kg = skeletons[g].keypoints[k];
                    (kg.x, kg.y, Repair::Held)
                }
                (None, None) => unreachable!("good observations exist"),
            };
            record(i, &original, repair);
            skeletons[i].keypoints[k] = Keypoint::new(x, y, conf_threshold);
            skeletons[i].interpolated |= 1 << k;
        }
    }

    report.bad.sort_by_key(|b| (b.frame, b.keypoint));
    let mut out = track.clone();
    for (f, s) in frames.iter().zip(skeletons) {
        out.frames.insert(*f, s);
    }
    Ok((out, report))
}

/// Repairs every track in parallel; reports are merged in track order.
pub fn interpolate_tracks(
    tracks: &[Track],
    scope: InterpolationScope,
    conf_threshold: f64,
) -> Result<(Vec<Track>, InterpolationReport), InterpolationError> {
    let results = tracks
        .par_iter()
        .map(|t| interpolate_track(t, scope, conf_threshold))
        .collect::<Result<Vec<_>, _>>()?;
    let mut report = InterpolationReport::default();
    let mut out = Vec::with_capacity(results.len());
    for (t, r) in results {
        out.push(t);
        report.merge(r);
    }
    Ok((out, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Skeleton;
    use proptest::prelude::*;

    fn track_of(points: &[(u64, Keypoint)], index: usize) -> Track {
        let mut t = Track::new(0);
        for (f, kp) in points {
            let mut s = Skeleton::new([Keypoint::new(1.0, 1.0, 0.9); KEYPOINT_COUNT]);
            s.keypoints[index] = *kp;
            t.frames.insert(*f, s);
        }
        t
    }

    #[test]
    fn linear_midpoint() {
        let t = track_of(
            &[
                (10, Keypoint::new(100.0, 200.0, 0.9)),
                (11, Keypoint::new(3.0, 4.0, 0.3)),
                (12, Keypoint::new(110.0, 210.0, 0.9)),
            ],
            0,
        );
        let (out, report) = interpolate_track(&t, InterpolationScope::WholeBody, 0.5).unwrap();
        let kp = out.frames[&11].keypoints[0];
        assert_eq!((kp.x, kp.y, kp.c), (105.0, 205.0, 0.5));
        assert!(out.frames[&11].is_interpolated(0));
        assert!(!out.frames[&10].is_interpolated(0));
        assert_eq!(report.bad.len(), 1);
        assert_eq!(report.bad[0].reason, BadReason::LowConfidence);
        assert_eq!(report.bad[0].repair, Repair::Interpolated);
    }

    #[test]
    fn uneven_frame_spacing_uses_frame_indices() {
        let t = track_of(
            &[
                (0, Keypoint::new(0.0, 0.0, 0.9)),
                (1, Keypoint::UNDETECTED),
                (4, Keypoint::new(40.0, 8.0, 0.9)),
            ],
            1,
        );
        let (out, report) = interpolate_track(&t, InterpolationScope::WholeBody, 0.5).unwrap();
        let kp = out.frames[&1].keypoints[1];
        assert_eq!((kp.x, kp.y), (10.0, 2.0));
        assert_eq!(report.bad[0].reason, BadReason::Undetected);
    }

    #[test]
    fn boundaries_hold_nearest_good() {
        let t = track_of(
            &[
                (0, Keypoint::UNDETECTED),
                (1, Keypoint::new(5.0, 6.0, 0.8)),
                (2, Keypoint::new(7.0, 8.0, 0.8)),
                (3, Keypoint::new(1.0, 1.0, 0.1)),
            ],
            4,
        );
        let (out, report) = interpolate_track(&t, InterpolationScope::WholeBody, 0.5).unwrap();
        assert_eq!(out.frames[&0].keypoints[4], Keypoint::new(5.0, 6.0, 0.5));
        assert_eq!(out.frames[&3].keypoints[4], Keypoint::new(7.0, 8.0, 0.5));
        assert!(report.bad.iter().all(|b| b.repair == Repair::Held));
    }

    #[test]
    fn no_op_when_all_good() {
        let t = track_of(&[(0, Keypoint::new(1.0, 2.0, 0.5)), (1, Keypoint::new(3.0, 4.0, 1.0))], 2);
        let (out, report) = interpolate_track(&t, InterpolationScope::WholeBody, 0.5).unwrap();
        assert_eq!(out, t);
        assert!(report.bad.is_empty());
    }

    #[test]
    fn unrecoverable_keypoint_flagged_and_left() {
        let t = track_of(&[(0, Keypoint::UNDETECTED), (1, Keypoint::new(2.0, 2.0, 0.2))], 17);
        let (out, report) = interpolate_track(&t, InterpolationScope::FaceOnly, 0.5).unwrap();
        assert_eq!(out, t);
        assert_eq!(report.unrecoverable, vec![(0, 17)]);
        assert_eq!(
            report.require_face_complete(),
            Err(InterpolationError::UnrecoverableFace { track_id: 0, indices: vec![17] })
        );
    }

    #[test]
    fn unrecoverable_body_point_does_not_block_face() {
        let t = track_of(&[(0, Keypoint::UNDETECTED)], 10);
        let (_, report) = interpolate_track(&t, InterpolationScope::WholeBody, 0.5).unwrap();
        assert_eq!(report.unrecoverable, vec![(0, 10)]);
        assert!(report.require_face_complete().is_ok());
    }

    #[test]
    fn face_only_touches_face_indices() {
        let mut t = Track::new(3);
        for f in 0..3 {
            t.frames.insert(f, Skeleton::new([Keypoint::new(f as f64, 0.0, if f == 1 { 0.1 } else { 0.9 }); KEYPOINT_COUNT]));
        }
        let (out, _) = interpolate_track(&t, InterpolationScope::FaceOnly, 0.5).unwrap();
        let s = out.frames[&1];
        for k in 0..KEYPOINT_COUNT {
            assert_eq!(s.is_interpolated(k), body25::FACE.contains(&k), "index {k}");
        }
    }

    #[test]
    fn threshold_validated() {
        let t = Track::new(0);
        assert!(interpolate_track(&t, InterpolationScope::FaceOnly, 0.0).is_err());
        assert!(interpolate_track(&t, InterpolationScope::FaceOnly, 1.0).is_err());
    }

    fn arb_track() -> impl Strategy<Value = Track> {
        let kp = (-500.0f64..500.0, -500.0f64..500.0, 0.0f64..=1.0, any::<bool>())
            .prop_map(|(x, y, c, drop)| if drop { Keypoint::UNDETECTED } else { Keypoint::new(x, y, c) });
        let frame = proptest::collection::vec(kp, KEYPOINT_COUNT);
        (proptest::collection::vec((1u64..4, frame), 1..25)).prop_map(|frames| {
            let mut t = Track::new(1);
            let mut f = 0;
            for (step, kps) in frames {
                let mut s = Skeleton::default();
                s.keypoints.copy_from_slice(&kps);
                t.frames.insert(f, s);
                f += step;
            }
            t
        })
    }

    proptest! {
        #[test]
        fn idempotent(t in arb_track()) {
            let (once, _) = interpolate_track(&t, InterpolationScope::WholeBody, 0.5).unwrap();
            let (twice, _) = interpolate_track(&once, InterpolationScope::WholeBody, 0.5).unwrap();
            prop_assert_eq!(once, twice);
        }

        #[test]
        fn good_values_untouched(t in arb_track()) {
            let (out, _) = interpolate_track(&t, InterpolationScope::WholeBody, 0.5).unwrap();
            for (f, s) in &t.frames {
                for k in 0..KEYPOINT_COUNT {
                    if s.keypoints[k].c >= 0.5 {
                        prop_assert_eq!(out.frames[f].keypoints[k], s.keypoints[k]);
                    }
                }
            }
        }

        #[test]
        fn face_only_agrees_with_whole_body(t in arb_track()) {
            let (face, _) = interpolate_track(&t, InterpolationScope::FaceOnly, 0.5).unwrap();
            let (body, _) = interpolate_track(&t, InterpolationScope::WholeBody, 0.5).unwrap();
            for f in t.frames.keys() {
                for &k in &body25::FACE {
                    prop_assert_eq!(face.frames[f].keypoints[k], body.frames[f].keypoints[k]);
                }
            }
        }

        #[test]
        fn interpolated_values_between_bounds(t in arb_track()) {
            let (out, report) = interpolate_track(&t, InterpolationScope::WholeBody, 0.5).unwrap();
            let frames: Vec<u64> = t.frames.keys().copied().collect();
            for b in report.bad.iter().filter(|b| b.repair == Repair::Interpolated) {
                let k = b.keypoint;
                let pos = frames.iter().position(|f| *f == b.frame).unwrap();
                let a = frames[..pos].iter().rev().find(|f| t.frames[f].keypoints[k].c >= 0.5).unwrap();
                let c = frames[pos + 1..].iter().find(|f| t.frames[f].keypoints[k].c >= 0.5).unwrap();
                let (ka, kc) = (t.frames[a].keypoints[k], t.frames[c].keypoints[k]);
                let v = out.frames[&b.frame].keypoints[k];
                prop_assert!(v.x >= ka.x.min(kc.x) - 1e-9 && v.x <= ka.x.max(kc.x) + 1e-9);
                prop_assert!(v.y >= ka.y.min(kc.y) - 1e-9 && v.y <= ka.y.max(kc.y) + 1e-9);
            }
        }

        #[test]
        fn locality(t in arb_track(), frame_pick in any::<prop::sample::Index>(), k in 0usize..KEYPOINT_COUNT, x in -500.0f64..500.0, y in -500.0f64..500.0) {
            let frames: Vec<u64> = t.frames.keys().copied().collect();
            let f = frames[frame_pick.index(frames.len())];
            let original = t.frames[&f].keypoints[k];
            prop_assume!(original.c < 0.5);
            let mut changed = t.clone();
            changed.frames.get_mut(&f).unwrap().keypoints[k] = Keypoint::new(x, y, original.c);
            let (a, _) = interpolate_track(&t, InterpolationScope::WholeBody, 0.5).unwrap();
            let (b, _) = interpolate_track(&changed, InterpolationScope::WholeBody, 0.5).unwrap();
            let pos = frames.iter().position(|g| *g == f).unwrap();
            let is_bad = |g: &u64| t.frames[g].keypoints[k].c < 0.5;
            let lo = frames[..pos].iter().rev().take_while(|g| is_bad(g)).last().copied().unwrap_or(f);
            let hi = frames[pos + 1..].iter().take_while(|g| is_bad(g)).last().copied().unwrap_or(f);
            for g in &frames {
                for kk in 0..KEYPOINT_COUNT {
                    if (*g < lo || *g > hi || kk != k) && !(kk == k && *g == f) {
                        prop_assert_eq!(a.frames[g].keypoints[kk], b.frames[g].keypoints[kk]);
                    }
                }
            }
        }
    }
}
