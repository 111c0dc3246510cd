//! Synthetic scene generation: walkers with known identities rendered into
//! BODY_25 skeletons, and textured frame images. Used for validation suites
//! and the bundled demo fixture.

use image::{Rgb, RgbImage};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::model::{body25, FramePose, Keypoint, Person, Point, Skeleton, VideoGeometry, KEYPOINT_COUNT};

/// Standing-pose keypoint offsets in units of body height, y pointing down,
/// mid-hip at the origin.
const TEMPLATE: [(f64, f64); KEYPOINT_COUNT] = [
    (0.0, -0.45),   // nose
    (0.0, -0.35),   // neck
    (-0.10, -0.35), // r shoulder
    (-0.12, -0.20),
    (-0.12, -0.07),
    (0.10, -0.35), // l shoulder
    (0.12, -0.20),
    (0.12, -0.07),
    (0.0, 0.0), // mid hip
    (-0.06, 0.0),
    (-0.06, 0.22),
    (-0.06, 0.44),
    (0.06, 0.0),
    (0.06, 0.22),
    (0.06, 0.44),
    (-0.02, -0.47), // r eye
    (0.02, -0.47),
    (-0.04, -0.46), // r ear
    (0.04, -0.46),
    (0.09, 0.48), // l big toe
    (0.11, 0.47),
    (0.05, 0.46),
    (-0.09, 0.48),
    (-0.11, 0.47),
    (-0.05, 0.46),
];

/// Neck to mid-hip distance of the template, in body heights.
pub const TEMPLATE_SPINE: f64 = 0.35;

fn template_mean() -> (f64, f64) {
    let n = KEYPOINT_COUNT as f64;
    let (sx, sy) = TEMPLATE.iter().fold((0.0, 0.0), |(a, b), (x, y)| (a + x, b + y));
    (sx / n, sy / n)
}

/// A noiseless skeleton of the given height whose centroid is `center`.
pub fn skeleton_at(center: Point, body_height: f64) -> Skeleton {
    let (mx, my) = template_mean();
    let mut s = Skeleton::default();
    for (kp, (ox, oy)) in s.keypoints.iter_mut().zip(TEMPLATE) {
        *kp = Keypoint::new(
            center.x + (ox - mx) * body_height,
            center.y + (oy - my) * body_height,
            0.9,
        );
    }
    s
}

/// Adds Gaussian positional noise and drops keypoints to `(0, 0, 0)`.
pub fn perturb<R: Rng>(s: &Skeleton, sigma: f64, dropout: f64, rng: &mut R) -> Skeleton {
    let mut out = *s;
    let noise = (sigma > 0.0).then(|| Normal::new(0.0, sigma).unwrap());
    for kp in out.keypoints.iter_mut() {
        if dropout > 0.0 && rng.random_bool(dropout) {
            *kp = Keypoint::UNDETECTED;
            continue;
        }
        if let Some(n) = &noise {
            kp.x += n.sample(rng);
            kp.y += n.sample(rng);
        }
    }
    out
}

/// Per-frame positions of one walker; `None` while out of view.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub positions: Vec<Option<Point>>,
}

impl Trajectory {
    pub fn presence(&self) -> f64 {
        let n = self.positions.len();
        if n == 0 {
            return 0.0;
        }
        self.positions.iter().filter(|p| p.is_some()).count() as f64 / n as f64
    }
}

#[derive(Debug, Clone)]
pub struct SceneSpec {
    pub geometry: VideoGeometry,
    pub body_height: f64,
    pub noise_sigma: f64,
    pub dropout: f64,
    /// Randomize person order within each frame.
    pub shuffle: bool,
}

#[derive(Debug, Clone)]
pub struct Scene {
    pub geometry: VideoGeometry,
    pub frames: Vec<FramePose>,
    /// For every frame, the walker index behind each person entry.
    pub labels: Vec<Vec<usize>>,
}

pub fn build_scene<R: Rng>(spec: &SceneSpec, walkers: &[Trajectory], rng: &mut R) -> Scene {
    let n_frames = spec.geometry.frame_count as usize;
    let mut frames = Vec::with_capacity(n_frames);
    let mut labels = Vec::with_capacity(n_frames);
    for f in 0..n_frames {
        let mut present: Vec<usize> = (0..walkers.len())
            .filter(|&w| walkers[w].positions.get(f).copied().flatten().is_some())
            .collect();
        if spec.shuffle {
            present.shuffle(rng);
        }
        let people = present
            .iter()
            .map(|&w| {
                let center = walkers[w].positions[f].unwrap();
                let s = perturb(&skeleton_at(center, spec.body_height), spec.noise_sigma, spec.dropout, rng);
                Person::untracked(s)
            })
            .collect();
        frames.push(FramePose::new(f as u64, people));
        labels.push(present);
    }
    Scene {
        geometry: spec.geometry,
        frames,
        labels,
    }
}

/// `count` walkers in separate vertical lanes that never cross.
///
/// Each walker drifts along its lane at under 2 px/frame with a small lateral
/// sway, so lane centers stay at least `0.6 * width / count` apart.
pub fn lane_walkers<R: Rng>(geometry: &VideoGeometry, count: usize, rng: &mut R) -> Vec<Trajectory> {
    let w = geometry.width as f64;
    let h = geometry.height as f64;
    let lane = w / count as f64;
    let n = geometry.frame_count as usize;
    let mut lanes: Vec<usize> = (0..count).collect();
    lanes.shuffle(rng);
    lanes
        .into_iter()
        .map(|l| {
            let cx = (l as f64 + 0.5) * lane;
            let sway = 0.2 * lane * rng.random::<f64>();
            let phase: f64 = rng.random::<f64>() * std::f64::consts::TAU;
            let speed = rng.random_range(0.3..1.8);
            let lo = 0.3 * h;
            let hi = 0.7 * h;
            let mut y = rng.random_range(lo..hi);
            let mut dir = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            let positions = (0..n)
                .map(|f| {
                    if y + dir * speed > hi || y + dir * speed < lo {
                        dir = -dir;
                    }
                    y += dir * speed;
                    let x = cx + sway * (phase + f as f64 * 0.05).sin();
                    Some(Point::new(x, y))
                })
                .collect();
            Trajectory { positions }
        })
        .collect()
}

/// Deterministic textured RGB frame: a gradient plus hashed noise, so any
/// local filtering changes pixel values.
pub fn textured_frame(width: u32, height: u32, index: u64, seed: u64) -> RgbImage {
    RgbImage::from_fn(width, height, |x, y| {
        let h = splitmix(seed ^ (index << 40) ^ ((y as u64) << 20) ^ x as u64);
        let gx = (x * 255 / width.max(1)) as u8;
        let gy = (y * 255 / height.max(1)) as u8;
        Rgb([
            gx.wrapping_add((h & 0x3f) as u8),
            gy.wrapping_add(((h >> 8) & 0x3f) as u8),
            ((index * 7) as u8).wrapping_add(((h >> 16) & 0x7f) as u8),
        ])
    })
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Spine length of a template skeleton of the given height.
pub fn template_spine_length(body_height: f64) -> f64 {
    let s = skeleton_at(Point::new(0.0, 0.0), body_height);
    s.keypoints[body25::NECK]
        .point()
        .distance(&s.keypoints[body25::MID_HIP].point())
}
