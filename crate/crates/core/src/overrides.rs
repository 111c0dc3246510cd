//! Reviewer edits applied on top of computed face boxes at render time.
//!
//! Overrides never modify stored face boxes. They are applied in list order,
//! so a later override wins where two touch the same region.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::blur::{BlurRegion, BlurStyle, BoxId, FaceBox, Rect};

#[derive(Debug, Error, PartialEq)]
pub enum OverrideError {
    #[error("override {id}: frame range {start}..={end} invalid for {frame_count} frames")]
    BadRange { id: u64, start: u64, end: u64, frame_count: u64 },
    #[error("override {id}: manual rectangle must have positive width and height")]
    BadRect { id: u64 },
    #[error("override {id}: unknown box {target}")]
    UnknownBox { id: u64, target: BoxTarget },
    #[error("duplicate override id {0}")]
    DuplicateId(u64),
    #[error("override file: {0}")]
    Storage(String),
    #[error("stale revision {given}, current is {current}")]
    StaleRevision { given: u64, current: u64 },
}

/// Which boxes an unblur removes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoxTarget {
    Track(u32),
    Manual(u64),
    All,
}

impl BoxTarget {
    fn matches(&self, id: BoxId) -> bool {
        match (self, id) {
            (Self::All, _) => true,
            (Self::Track(a), BoxId::Track(b)) => *a == b,
            (Self::Manual(a), BoxId::Manual(b)) => *a == b,
            _ => false,
        }
    }
}

impl fmt::Display for BoxTarget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Track(id) => write!(f, "track:{id}"),
            Self::Manual(id) => write!(f, "manual:{id}"),
            Self::All => f.write_str("all"),
        }
    }
}

impl FromStr for BoxTarget {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "all" {
            return Ok(Self::All);
        }
        let bad = || format!("invalid box target '{s}'");
        let (kind, id) = s.split_once(':').ok_or_else(bad)?;
        match kind {
            "track" => id.parse().map(Self::Track).map_err(|_| bad()),
            "manual" => id.parse().map(Self::Manual).map_err(|_| bad()),
            _ => Err(bad()),
        }
    }
}

impl Serialize for BoxTarget {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for BoxTarget {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ManualRect {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type")]
pub enum OverrideAction {
    Unblur { target: BoxTarget },
    ManualBlur { rect: ManualRect, style: BlurStyle },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Override {
    pub id: u64,
    pub stem: String,
    /// First frame, inclusive.
    pub start: u64,
    /// Last frame, inclusive.
    pub end: u64,
    pub action: OverrideAction,
    #[serde(default)]
    pub note: String,
}

impl Override {
    pub fn covers(&self, frame: u64) -> bool {
        (self.start..=self.end).contains(&frame)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct OverrideSet {
    pub revision: u64,
    pub overrides: Vec<Override>,
}

impl OverrideSet {
    pub fn from_overrides(overrides: Vec<Override>) -> Self {
        Self { revision: 0, overrides }
    }

    pub fn is_empty(&self) -> bool {
        self.overrides.is_empty()
    }

    pub fn next_id(&self) -> u64 {
        self.overrides.iter().map(|o| o.id + 1).max().unwrap_or(0)
    }

    /// Replaces the whole list and bumps the revision.
    pub fn replace(&mut self, overrides: Vec<Override>) -> u64 {
        self.overrides = overrides;
        self.revision += 1;
        self.revision
    }

    pub fn push(&mut self, mut o: Override) -> u64 {
        o.id = self.next_id();
        self.overrides.push(o);
        self.revision += 1;
        self.revision
    }

    pub fn remove(&mut self, id: u64) -> Option<Override> {
        let pos = self.overrides.iter().position(|o| o.id == id)?;
        self.revision += 1;
        Some(self.overrides.remove(pos))
    }

    /// Checks ranges, rectangles, id uniqueness and unblur targets.
    pub fn validate(&self, boxes: &[FaceBox], frame_count: u64) -> Result<(), OverrideError> {
        let mut seen = std::collections::BTreeSet::new();
        for o in &self.overrides {
            if !seen.insert(o.id) {
                return Err(OverrideError::DuplicateId(o.id));
            }
        }
        for o in &self.overrides {
            if o.start > o.end || o.end >= frame_count {
                return Err(OverrideError::BadRange {
                    id: o.id,
                    start: o.start,
                    end: o.end,
                    frame_count,
                });
            }
            match &o.action {
                OverrideAction::ManualBlur { rect, .. } => {
                    if !(rect.w > 0.0 && rect.h > 0.0) {
                        return Err(OverrideError::BadRect { id: o.id });
                    }
                }
                OverrideAction::Unblur { target } => {
                    let known = match target {
                        BoxTarget::All => true,
                        BoxTarget::Track(t) => boxes.iter().any(|b| b.track_id == *t),
                        BoxTarget::Manual(m) => self
                            .overrides
                            .iter()
                            .any(|x| x.id == *m && matches!(x.action, OverrideAction::ManualBlur { .. })),
                    };
                    if !known {
                        return Err(OverrideError::UnknownBox { id: o.id, target: *target });
                    }
                }
            }
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, OverrideError> {
        if !path.exists() {
            return Ok(Self::default());
        }
        let text = fs::read_to_string(path).map_err(|e| OverrideError::Storage(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| OverrideError::Storage(format!("{}: {e}", path.display())))
    }

    /// Writes atomically via a temporary file in the same directory.
    pub fn save(&self, path: &Path) -> Result<(), OverrideError> {
        let storage = |e: std::io::Error| OverrideError::Storage(format!("{}: {e}", path.display()));
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).map_err(storage)?;
        }
        let mut text = serde_json::to_string_pretty(self).expect("override set serializes");
        text.push('\n');
        let tmp = path.with_extension("json.tmp");
        fs::write(&tmp, text).map_err(storage)?;
        fs::rename(&tmp, path).map_err(storage)
    }
}

/// Effective regions per frame; frames without regions are absent.
pub type EffectiveBoxes = BTreeMap<u64, Vec<BlurRegion>>;

/// Resolves computed boxes plus overrides into the regions to render.
///
/// Face boxes take `style`; manual boxes carry their own. Regions in each
/// frame are ordered by box id.
pub fn apply_overrides(
    boxes: &[FaceBox],
    style: BlurStyle,
    overrides: &OverrideSet,
    frame_count: u64,
) -> Result<EffectiveBoxes, OverrideError> {
    overrides.validate(boxes, frame_count)?;
    let mut out: EffectiveBoxes = BTreeMap::new();
    for b in boxes {
        out.entry(b.frame).or_default().push(BlurRegion {
            id: BoxId::Track(b.track_id),
            rect: b.rect(),
            style,
        });
    }
    for o in &overrides.overrides {
        match &o.action {
            OverrideAction::Unblur { target } => {
                for (_, regions) in out.range_mut(o.start..=o.end) {
                    regions.retain(|r| !target.matches(r.id));
                }
            }
            OverrideAction::ManualBlur { rect, style } => {
                for f in o.start..=o.end {
                    out.entry(f).or_default().push(BlurRegion {
                        id: BoxId::Manual(o.id),
                        rect: Rect::from_xywh(rect.x, rect.y, rect.w, rect.h),
                        style: *style,
                    });
                }
            }
        }
    }
    out.retain(|_, r| !r.is_empty());
    for regions in out.values_mut() {
        regions.sort_by_key(|r| r.id);
    }
    Ok(out)
}
