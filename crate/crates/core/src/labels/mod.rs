//! Self-supervised label production: goal sampling, projection of planned
//! paths and goals into image masks, and dataset emission.

mod dataset;

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::costmap::Costmap;
use crate::error::{Error, Result};
use crate::geometry::{Point2, Pose2D};
use crate::scene::{encode_gray8, parse_gray, CameraModel};

pub use dataset::{
    assign_splits, generate_dataset, label_scene, manifest_path, parse_manifest, DatasetConfig, LabeledSample,
    Manifest, ManifestRecord, SampleOutcome, SceneLabels, Split, SplitRatio,
};

pub const DEFAULT_THICKNESS: f64 = 5.0;
pub const DEFAULT_MIN_GOAL_DIST: f64 = 1.0;
/// Points closer than this to the camera plane are clipped before projection.
const NEAR_PLANE: f64 = 0.05;

/// Per-pixel values in `[0, 1]`, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct BinaryMask {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl BinaryMask {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::contract(format!(
                "mask data has {} values, expected {}",
                data.len(),
                width * height
            )));
        }
        if data.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::contract("mask values must lie in [0, 1]"));
        }
        Ok(Self { width, height, data })
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        Self {
            width,
            height,
            data: vec![value.clamp(0.0, 1.0); width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn get(&self, u: usize, v: usize) -> f64 {
        self.data[v * self.width + u]
    }

    pub fn set(&mut self, u: usize, v: usize, value: f64) {
        self.data[v * self.width + u] = value.clamp(0.0, 1.0);
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Pixels with value above one half.
    pub fn count_set(&self) -> usize {
        self.data.iter().filter(|&&v| v > 0.5).count()
    }

    pub fn set_pixels(&self) -> Vec<(usize, usize)> {
        (0..self.height)
            .flat_map(|v| (0..self.width).map(move |u| (u, v)))
            .filter(|&(u, v)| self.get(u, v) > 0.5)
            .collect()
    }

    pub fn to_pgm(&self, comments: &[String]) -> Vec<u8> {
        let bytes: Vec<u8> = self.data.iter().map(|v| (v * 255.0).round() as u8).collect();
        encode_gray8(self.width, self.height, &bytes, comments)
    }

    pub fn parse_pgm(bytes: &[u8]) -> Result<Self> {
        let (w, h, data) = parse_gray(bytes)?;
        Self::new(w, h, data)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::parse_pgm(&bytes)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MaskStatus {
    Ok,
    /// Nothing projected into the image.
    Empty,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProjectedMask {
    pub mask: BinaryMask,
    pub status: MaskStatus,
}

/// A uniformly drawn Free cell center at least `min_dist` from the map-frame
/// origin, with a uniform heading in (-pi, pi].
pub fn sample_goal(map: &Costmap, seed: u64, min_dist: f64) -> Result<Pose2D> {
    let candidates: Vec<Point2> = map
        .free_cells()
        .map(|c| map.cell_center(c))
        .filter(|p| p.norm() >= min_dist)
        .collect();
    if candidates.is_empty() {
        return Err(Error::NoFreeSpace);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p = candidates[rng.random_range(0..candidates.len())];
    let u: f64 = rng.random();
    Ok(Pose2D::new(p.x, p.y, std::f64::consts::PI - 2.0 * std::f64::consts::PI * u))
}

fn ground_to_camera(cam: &CameraModel, p: Point2) -> [f64; 3] {
    cam.body_to_camera([p.x, p.y, 0.0])
}

fn pixel_of(cam: &CameraModel, c: [f64; 3]) -> Point2 {
    Point2::new(cam.fx * c[0] / c[2] + cam.cx, cam.fy * c[1] / c[2] + cam.cy)
}

/// Clips a camera-frame segment to `z >= NEAR_PLANE`.
fn clip_near(a: [f64; 3], b: [f64; 3]) -> Option<([f64; 3], [f64; 3])> {
    let (za, zb) = (a[2] - NEAR_PLANE, b[2] - NEAR_PLANE);
    if za < 0.0 && zb < 0.0 {
        return None;
    }
    let cut = |p: [f64; 3], q: [f64; 3], zp: f64, zq: f64| {
        let t = zp / (zp - zq);
        [p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1]), NEAR_PLANE]
    };
    Some(match (za >= 0.0, zb >= 0.0) {
        (true, true) => (a, b),
        (true, false) => (a, cut(a, b, za, zb)),
        (false, true) => (cut(a, b, za, zb), b),
        (false, false) => unreachable!(),
    })
}

/// Marks every pixel whose center is within `radius` of segment `a -> b`.
fn stamp_segment(mask: &mut BinaryMask, a: Point2, b: Point2, radius: f64) {
    let (w, h) = (mask.width as f64, mask.height as f64);
    let lo_u = (a.x.min(b.x) - radius - 0.5).floor().max(0.0);
    let hi_u = (a.x.max(b.x) + radius).ceil().min(w - 1.0);
    let lo_v = (a.y.min(b.y) - radius - 0.5).floor().max(0.0);
    let hi_v = (a.y.max(b.y) + radius).ceil().min(h - 1.0);
    if lo_u > hi_u || lo_v > hi_v {
        return;
    }
    for v in lo_v as usize..=hi_v as usize {
        for u in lo_u as usize..=hi_u as usize {
            let c = Point2::new(u as f64 + 0.5, v as f64 + 0.5);
            if crate::geometry::point_segment_distance(c, a, b) <= radius {
                mask.set(u, v, 1.0);
            }
        }
    }
}

fn finish(mask: BinaryMask) -> ProjectedMask {
    let status = if mask.count_set() > 0 { MaskStatus::Ok } else { MaskStatus::Empty };
    ProjectedMask { mask, status }
}

/// Projects ground-plane body-frame points into a `{0, 1}` mask. A single
/// point becomes a disc of radius `thickness`; several points become a
/// polyline `thickness` pixels wide. Anything behind the camera is clipped.
pub fn project_to_mask(points: &[Point2], cam: &CameraModel, thickness: f64) -> Result<ProjectedMask> {
    if points.is_empty() {
        return Err(Error::contract("project_to_mask needs at least one point"));
    }
    if !(thickness > 0.0 && thickness.is_finite()) {
        return Err(Error::contract("mask thickness must be positive"));
    }
    let mut mask = BinaryMask::filled(cam.width, cam.height, 0.0);
    if let [p] = points {
        let c = ground_to_camera(cam, *p);
        if c[2] >= NEAR_PLANE {
            let px = pixel_of(cam, c);
            stamp_segment(&mut mask, px, px, thickness);
        }
        return Ok(finish(mask));
    }
    for w in points.windows(2) {
        let (a, b) = (ground_to_camera(cam, w[0]), ground_to_camera(cam, w[1]));
        if let Some((a, b)) = clip_near(a, b) {
            stamp_segment(&mut mask, pixel_of(cam, a), pixel_of(cam, b), thickness / 2.0);
        }
    }
    Ok(finish(mask))
}

/// Projects a goal position as a disc.
pub fn project_goal(goal: &Pose2D, cam: &CameraModel, radius: f64) -> Result<ProjectedMask> {
    project_to_mask(&[goal.position()], cam, radius)
}
