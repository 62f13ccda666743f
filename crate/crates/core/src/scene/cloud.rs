use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::scene::camera::CameraModel;
use crate::scene::image::{DepthImage, SemanticClass, SemanticImage};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Frame {
    Camera,
    ProjectedBody,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LabeledPoint {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub class: SemanticClass,
}

impl LabeledPoint {
    pub fn new(x: f64, y: f64, z: f64, class: SemanticClass) -> Self {
        Self { x, y, z, class }
    }

    fn dist2(&self, o: &LabeledPoint) -> f64 {
        let (dx, dy, dz) = (self.x - o.x, self.y - o.y, self.z - o.z);
        dx * dx + dy * dy + dz * dz
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PointCloud {
    frame: Frame,
    points: Vec<LabeledPoint>,
}

impl PointCloud {
    pub fn new(frame: Frame, points: Vec<LabeledPoint>) -> Result<Self> {
        if points
            .iter()
            .any(|p| !(p.x.is_finite() && p.y.is_finite() && p.z.is_finite()))
        {
            return Err(Error::contract("point coordinates must be finite"));
        }
        Ok(Self { frame, points })
    }

    pub fn empty(frame: Frame) -> Self {
        Self {
            frame,
            points: Vec::new(),
        }
    }

    pub fn frame(&self) -> Frame {
        self.frame
    }

    pub fn points(&self) -> &[LabeledPoint] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn into_points(self) -> Vec<LabeledPoint> {
        self.points
    }
}

/// One labeled camera-frame point per pixel with a valid depth within range.
pub fn backproject(
    depth: &DepthImage,
    semantic: &SemanticImage,
    cam: &CameraModel,
) -> Result<PointCloud> {
    if depth.width() != cam.width
        || depth.height() != cam.height
        || semantic.width() != cam.width
        || semantic.height() != cam.height
    {
        return Err(Error::contract(format!(
            "image dimensions depth {}x{}, semantic {}x{} do not match camera {}x{}",
            depth.width(),
            depth.height(),
            semantic.width(),
            semantic.height(),
            cam.width,
            cam.height
        )));
    }
    let mut points = Vec::new();
    for v in 0..cam.height {
        for u in 0..cam.width {
            let d = depth.get(u, v);
            if d <= 0.0 || d > cam.max_range {
                continue;
            }
            let [x, y, z] = cam.backproject_pixel(u as f64, v as f64, d);
            points.push(LabeledPoint::new(x, y, z, semantic.get(u, v)));
        }
    }
    Ok(PointCloud {
        frame: Frame::Camera,
        points,
    })
}

#[derive(Clone, Debug)]
pub struct OutlierFilterOutput {
    pub cloud: PointCloud,
    pub removed: usize,
    /// Set when the cloud had no more than `k` points and was passed through.
    pub too_few_points: bool,
}

pub const DEFAULT_OUTLIER_K: usize = 8;
pub const DEFAULT_OUTLIER_STD_MULT: f64 = 1.0;

/// Statistical outlier removal: a point is dropped when the mean distance to
/// its `k` nearest neighbours exceeds `mean + std_mult * stddev` of that
/// statistic over the whole cloud.
pub fn filter_outliers(pc: &PointCloud, k: usize, std_mult: f64) -> Result<OutlierFilterOutput> {
    if k == 0 || !(std_mult > 0.0) {
        return Err(Error::contract("filter_outliers needs k >= 1 and std_mult > 0"));
    }
    if pc.len() <= k {
        log::warn!(
            "outlier filter skipped: {} points, k = {}",
            pc.len(),
            k
        );
        return Ok(OutlierFilterOutput {
            cloud: pc.clone(),
            removed: 0,
            too_few_points: true,
        });
    }
    let mean_dists = mean_knn_distances(&pc.points, k);
    let n = mean_dists.len() as f64;
    let mean = crate::geometry::compensated_sum(mean_dists.iter().copied()) / n;
    let var = crate::geometry::compensated_sum(mean_dists.iter().map(|d| (d - mean) * (d - mean)))
        / (n - 1.0);
    let threshold = mean + std_mult * var.max(0.0).sqrt();
    let points: Vec<LabeledPoint> = pc
        .points
        .iter()
        .zip(&mean_dists)
        .filter(|(_, d)| **d <= threshold)
        .map(|(p, _)| *p)
        .collect();
    let removed = pc.len() - points.len();
    Ok(OutlierFilterOutput {
        cloud: PointCloud {
            frame: pc.frame,
            points,
        },
        removed,
        too_few_points: false,
    })
}

type VoxelKey = (i64, i64, i64);

/// Mean distance from every point to its `k` nearest other points, using a
/// uniform voxel hash with expanding shell search.
pub(crate) fn mean_knn_distances(points: &[LabeledPoint], k: usize) -> Vec<f64> {
    let n = points.len();
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for p in points {
        for (i, c) in [p.x, p.y, p.z].into_iter().enumerate() {
            lo[i] = lo[i].min(c);
            hi[i] = hi[i].max(c);
        }
    }
    let extent = (0..3).map(|i| hi[i] - lo[i]).fold(0.0, f64::max);
    if extent == 0.0 {
        return vec![0.0; n];
    }
    // Depth-image clouds are surfaces, so size voxels for a 2-D density.
    let cell = (extent * (k as f64 / n as f64).sqrt()).max(extent * 1e-6);
    let key = |p: &LabeledPoint| -> VoxelKey {
        (
            ((p.x - lo[0]) / cell).floor() as i64,
            ((p.y - lo[1]) / cell).floor() as i64,
            ((p.z - lo[2]) / cell).floor() as i64,
        )
    };
    let mut grid: HashMap<VoxelKey, Vec<u32>> = HashMap::new();
    for (i, p) in points.iter().enumerate() {
        grid.entry(key(p)).or_default().push(i as u32);
    }
    let max_ring = (extent / cell).ceil() as i64 + 1;

    let mut best: Vec<f64> = Vec::with_capacity(k + 1);
    points
        .iter()
        .enumerate()
        .map(|(i, p)| {
            best.clear();
            let c = key(p);
            let mut ring = 0i64;
            loop {
                for dx in -ring..=ring {
                    for dy in -ring..=ring {
                        for dz in -ring..=ring {
                            if dx.abs().max(dy.abs()).max(dz.abs()) != ring {
                                continue;
                            }
                            if let Some(bucket) = grid.get(&(c.0 + dx, c.1 + dy, c.2 + dz)) {
                                for &j in bucket {
                                    if j as usize == i {
                                        continue;
                                    }
                                    insert_bounded(&mut best, p.dist2(&points[j as usize]), k);
                                }
                            }
                        }
                    }
                }
                // Anything in a farther shell is at least `ring * cell` away.
                let shell_bound = ring as f64 * cell;
                if (best.len() == k && best[k - 1] <= shell_bound * shell_bound) || ring > max_ring {
                    break;
                }
                ring += 1;
            }
            best.iter().map(|d2| d2.sqrt()).sum::<f64>() / best.len().max(1) as f64
        })
        .collect()
}

fn insert_bounded(best: &mut Vec<f64>, d2: f64, k: usize) {
    if best.len() == k && d2 >= best[k - 1] {
        return;
    }
    let pos = best.partition_point(|&x| x <= d2);
    best.insert(pos, d2);
    if best.len() > k {
        best.pop();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn brute_force_mean_knn(points: &[LabeledPoint], k: usize) -> Vec<f64> {
        points
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let mut d: Vec<f64> = points
                    .iter()
                    .enumerate()
                    .filter(|(j, _)| *j != i)
                    .map(|(_, q)| p.dist2(q).sqrt())
                    .collect();
                d.sort_by(f64::total_cmp);
                d[..k].iter().sum::<f64>() / k as f64
            })
            .collect()
    }

    fn plane_with_far_point() -> PointCloud {
        let mut pts = Vec::new();
        for i in 0..10 {
            for j in 0..10 {
                pts.push(LabeledPoint::new(
                    i as f64 * 0.1,
                    j as f64 * 0.1,
                    2.0,
                    SemanticClass::Drivable,
                ));
            }
        }
        pts.push(LabeledPoint::new(0.45, 0.45, 12.0, SemanticClass::Obstacle));
        PointCloud::new(Frame::Camera, pts).unwrap()
    }

    #[test]
    fn principal_ray_backprojects_onto_optical_axis() {
        let cam = CameraModel::default_wheelchair();
        let mut depth = DepthImage::filled(cam.width, cam.height, 0.0);
        let sem = SemanticImage::filled(cam.width, cam.height, SemanticClass::Drivable);
        depth.set(cam.cx as usize, cam.cy as usize, 3.0);
        let pc = backproject(&depth, &sem, &cam).unwrap();
        assert_eq!(pc.len(), 1);
        let p = pc.points()[0];
        assert_eq!((p.x, p.y, p.z), (0.0, 0.0, 3.0));
    }

    #[test]
    fn one_focal_length_off_axis() {
        let cam = CameraModel::default_wheelchair();
        let u = cam.cx + cam.fx;
        assert_eq!(u.fract(), u.fract()); // pixel grid check below
        let p = cam.backproject_pixel(u, cam.cy, 2.0);
        assert!((p[0] - 2.0).abs() < 1e-12 && p[1] == 0.0 && p[2] == 2.0);
        let (pu, pv) = cam.project(p).unwrap();
        assert!((pu - u).abs() < 1e-9 && (pv - cam.cy).abs() < 1e-9);
    }

    #[test]
    fn zero_depth_gives_empty_cloud() {
        let cam = CameraModel::default_wheelchair();
        let depth = DepthImage::filled(cam.width, cam.height, 0.0);
        let sem = SemanticImage::filled(cam.width, cam.height, SemanticClass::Drivable);
        assert!(backproject(&depth, &sem, &cam).unwrap().is_empty());
    }

    #[test]
    fn beyond_range_is_skipped_and_mismatch_rejected() {
        let cam = CameraModel::default_wheelchair();
        let depth = DepthImage::filled(cam.width, cam.height, cam.max_range + 0.5);
        let sem = SemanticImage::filled(cam.width, cam.height, SemanticClass::Drivable);
        assert!(backproject(&depth, &sem, &cam).unwrap().is_empty());
        let small = DepthImage::filled(10, 10, 1.0);
        assert!(matches!(
            backproject(&small, &sem, &cam),
            Err(Error::ContractViolation(_))
        ));
    }

    #[test]
    fn far_point_removed_plane_kept() {
        let pc = plane_with_far_point();
        let out = filter_outliers(&pc, 8, 1.0).unwrap();
        assert_eq!(out.removed, 1);
        assert_eq!(out.cloud.len(), 100);
        assert!(out.cloud.points().iter().all(|p| p.z == 2.0));
    }

    #[test]
    fn identical_points_are_kept() {
        let pts = vec![LabeledPoint::new(1.0, 2.0, 3.0, SemanticClass::Drivable); 50];
        let pc = PointCloud::new(Frame::Camera, pts).unwrap();
        let out = filter_outliers(&pc, 8, 1.0).unwrap();
        assert_eq!(out.cloud, pc);
        assert!(!out.too_few_points);
    }

    #[test]
    fn small_cloud_passes_through_with_flag() {
        let pts = vec![LabeledPoint::new(0.0, 0.0, 1.0, SemanticClass::Drivable); 5];
        let pc = PointCloud::new(Frame::Camera, pts).unwrap();
        let out = filter_outliers(&pc, 8, 1.0).unwrap();
        assert!(out.too_few_points);
        assert_eq!(out.cloud, pc);
    }

    #[test]
    fn voxel_knn_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for trial in 0..6 {
            let n = 50 + trial * 60;
            let mut pts: Vec<LabeledPoint> = (0..n)
                .map(|_| {
                    LabeledPoint::new(
                        rng.random_range(-3.0..3.0),
                        rng.random_range(-1.0..1.0),
                        if trial % 2 == 0 { 1.5 } else { rng.random_range(0.5..5.0) },
                        SemanticClass::Drivable,
                    )
                })
                .collect();
            // duplicates and a far outlier
            pts.push(pts[0]);
            pts.push(LabeledPoint::new(40.0, 0.0, 1.0, SemanticClass::Obstacle));
            let fast = mean_knn_distances(&pts, 8);
            let slow = brute_force_mean_knn(&pts, 8);
            for (a, b) in fast.iter().zip(&slow) {
                assert!((a - b).abs() < 1e-12, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn filter_is_deterministic_and_a_subset() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let pts: Vec<LabeledPoint> = (0..400)
            .map(|_| {
                LabeledPoint::new(
                    rng.random_range(0.0..1.0),
                    rng.random_range(0.0..1.0),
                    rng.random_range(0.0..0.05),
                    SemanticClass::Drivable,
                )
            })
            .collect();
        let pc = PointCloud::new(Frame::Camera, pts).unwrap();
        let a = filter_outliers(&pc, 8, 1.0).unwrap();
        let b = filter_outliers(&pc, 8, 1.0).unwrap();
        assert_eq!(a.cloud, b.cloud);
        assert!(a.cloud.points().iter().all(|p| pc.points().contains(p)));
    }
}
