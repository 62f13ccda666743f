//! Seeded synthetic RGB-D scenes: flat ground, a drivable polygon and
//! extruded box/cylinder obstacles, rendered by ray casting.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::costmap::{perceive, BuildOptions, Costmap, RobotFootprint};
use crate::error::{Error, Result};
use crate::geometry::{point_in_polygon, Point2, Pose2D};
use crate::scene::camera::CameraModel;
use crate::scene::image::{encode_ppm, DepthImage, RgbRef, SemanticClass, SemanticImage};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Obstacle {
    Box {
        center: Point2,
        half_x: f64,
        half_y: f64,
        yaw: f64,
        height: f64,
    },
    Cylinder {
        center: Point2,
        radius: f64,
        height: f64,
    },
}

impl Obstacle {
    fn height(&self) -> f64 {
        match self {
            Obstacle::Box { height, .. } | Obstacle::Cylinder { height, .. } => *height,
        }
    }

    /// Axis-aligned bounds of the footprint: (min, max).
    fn bounds(&self) -> (Point2, Point2) {
        match *self {
            Obstacle::Box {
                center,
                half_x,
                half_y,
                yaw,
                ..
            } => {
                let (s, c) = yaw.sin_cos();
                let ex = (c * half_x).abs() + (s * half_y).abs();
                let ey = (s * half_x).abs() + (c * half_y).abs();
                (
                    Point2::new(center.x - ex, center.y - ey),
                    Point2::new(center.x + ex, center.y + ey),
                )
            }
            Obstacle::Cylinder { center, radius, .. } => (
                Point2::new(center.x - radius, center.y - radius),
                Point2::new(center.x + radius, center.y + radius),
            ),
        }
    }

    fn contains(&self, p: [f64; 3]) -> bool {
        if p[2] < 0.0 || p[2] > self.height() {
            return false;
        }
        match *self {
            Obstacle::Box {
                center,
                half_x,
                half_y,
                yaw,
                ..
            } => {
                let l = (Point2::new(p[0], p[1]) - center).rotated(-yaw);
                l.x.abs() <= half_x && l.y.abs() <= half_y
            }
            Obstacle::Cylinder { center, radius, .. } => {
                Point2::new(p[0], p[1]).dist(center) <= radius
            }
        }
    }

    /// Smallest positive ray parameter at which `o + t d` enters the solid.
    fn intersect(&self, o: [f64; 3], d: [f64; 3]) -> Option<f64> {
        match *self {
            Obstacle::Box {
                center,
                half_x,
                half_y,
                yaw,
                height,
            } => {
                let lo = (Point2::new(o[0], o[1]) - center).rotated(-yaw);
                let ld = Point2::new(d[0], d[1]).rotated(-yaw);
                let lo3 = [lo.x, lo.y, o[2]];
                let ld3 = [ld.x, ld.y, d[2]];
                let lim = [(-half_x, half_x), (-half_y, half_y), (0.0, height)];
                let (mut t0, mut t1) = (f64::NEG_INFINITY, f64::INFINITY);
                for k in 0..3 {
                    if ld3[k].abs() < 1e-15 {
                        if lo3[k] < lim[k].0 || lo3[k] > lim[k].1 {
                            return None;
                        }
                    } else {
                        let a = (lim[k].0 - lo3[k]) / ld3[k];
                        let b = (lim[k].1 - lo3[k]) / ld3[k];
                        t0 = t0.max(a.min(b));
                        t1 = t1.min(a.max(b));
                    }
                }
                (t0 <= t1 && t0 > 1e-9).then_some(t0)
            }
            Obstacle::Cylinder {
                center,
                radius,
                height,
            } => {
                let mut best: Option<f64> = None;
                let (px, py) = (o[0] - center.x, o[1] - center.y);
                let a = d[0] * d[0] + d[1] * d[1];
                if a > 1e-15 {
                    let b = 2.0 * (px * d[0] + py * d[1]);
                    let c = px * px + py * py - radius * radius;
                    let disc = b * b - 4.0 * a * c;
                    if disc >= 0.0 {
                        let t = (-b - disc.sqrt()) / (2.0 * a);
                        let z = o[2] + t * d[2];
                        if t > 1e-9 && (0.0..=height).contains(&z) {
                            best = Some(t);
                        }
                    }
                }
                if d[2].abs() > 1e-15 {
                    let t = (height - o[2]) / d[2];
                    let (x, y) = (px + t * d[0], py + t * d[1]);
                    if t > 1e-9 && x * x + y * y <= radius * radius {
                        best = Some(best.map_or(t, |b: f64| b.min(t)));
                    }
                }
                best
            }
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    /// Standard deviation of additive depth noise, meters.
    pub depth_sigma: f64,
    /// Probability that a drivable pixel is labeled as obstacle.
    pub misclass_drivable: f64,
    /// Probability that an obstacle pixel is labeled as drivable.
    pub misclass_obstacle: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    /// World extent `[x_min, y_min, x_max, y_max]`, meters.
    pub extent: [f64; 4],
    pub obstacles: Vec<Obstacle>,
    /// Drivable ground region; ground outside it renders as Unknown.
    pub drivable: Vec<Point2>,
    /// Robot pose in the world; the camera sits on it via the extrinsics.
    pub robot_pose: Pose2D,
    #[serde(default)]
    pub noise: NoiseSpec,
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        let [x0, y0, x1, y1] = self.extent;
        if !(x0 < x1 && y0 < y1) || self.extent.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidScene("extent must be finite with min < max".into()));
        }
        for (i, o) in self.obstacles.iter().enumerate() {
            let (lo, hi) = o.bounds();
            let dims_ok = match *o {
                Obstacle::Box {
                    half_x,
                    half_y,
                    height,
                    yaw,
                    ..
                } => half_x > 0.0 && half_y > 0.0 && height > 0.0 && yaw.is_finite(),
                Obstacle::Cylinder { radius, height, .. } => radius > 0.0 && height > 0.0,
            };
            if !dims_ok || !lo.is_finite() || !hi.is_finite() {
                return Err(Error::InvalidScene(format!("obstacle {i} has invalid dimensions")));
            }
            if lo.x < x0 || lo.y < y0 || hi.x > x1 || hi.y > y1 {
                return Err(Error::InvalidScene(format!("obstacle {i} extends outside the world")));
            }
        }
        if self.drivable.len() < 3 || self.drivable.iter().any(|p| !p.is_finite()) {
            return Err(Error::InvalidScene("drivable polygon needs at least 3 finite vertices".into()));
        }
        if !self.robot_pose.is_finite() {
            return Err(Error::InvalidScene("robot pose must be finite".into()));
        }
        let n = &self.noise;
        let prob = |p: f64| (0.0..=1.0).contains(&p);
        if !(n.depth_sigma >= 0.0 && n.depth_sigma.is_finite())
            || !prob(n.misclass_drivable)
            || !prob(n.misclass_obstacle)
        {
            return Err(Error::InvalidScene(
                "noise needs depth_sigma >= 0 and misclassification rates in [0, 1]".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SceneRender {
    pub depth: DepthImage,
    pub semantic: SemanticImage,
    pub rgb: RgbRef,
    /// Costmap built from the noise-free render.
    pub ground_truth: Costmap,
}

fn camera_world_pose(spec: &SceneSpec, cam: &CameraModel) -> [f64; 3] {
    let t = cam.extrinsics.translation;
    let p = spec.robot_pose.transform_point(Point2::new(t[0], t[1]));
    [p.x, p.y, t[2]]
}

/// Noise-free ray cast of every pixel: (depth, class). Rays that hit nothing
/// within range yield depth 0 and Unknown.
fn ray_cast(spec: &SceneSpec, cam: &CameraModel) -> (DepthImage, SemanticImage) {
    let o = camera_world_pose(spec, cam);
    let (s, c) = spec.robot_pose.theta.sin_cos();
    let mut depth = DepthImage::filled(cam.width, cam.height, 0.0);
    let mut sem = SemanticImage::filled(cam.width, cam.height, SemanticClass::Unknown);
    for v in 0..cam.height {
        for u in 0..cam.width {
            let (d, class) = cast_pixel(spec, cam, o, (s, c), u as f64, v as f64);
            if d > 0.0 && d <= cam.max_range {
                depth.set(u, v, d);
                sem.set(u, v, class);
            }
        }
    }
    (depth, sem)
}

/// Depth along the optical axis and class of the first surface hit by the ray
/// through pixel `(u, v)`; depth 0 when nothing is hit.
fn cast_pixel(
    spec: &SceneSpec,
    cam: &CameraModel,
    o: [f64; 3],
    (s, c): (f64, f64),
    u: f64,
    v: f64,
) -> (f64, SemanticClass) {
    // Optical z component of 1 makes the ray parameter equal to depth.
    let db = cam.direction_to_body([(u - cam.cx) / cam.fx, (v - cam.cy) / cam.fy, 1.0]);
    let d = [c * db[0] - s * db[1], s * db[0] + c * db[1], db[2]];
    let mut best = (f64::INFINITY, SemanticClass::Unknown);
    if d[2] < -1e-12 {
        let t = -o[2] / d[2];
        let g = Point2::new(o[0] + t * d[0], o[1] + t * d[1]);
        let class = if point_in_polygon(&spec.drivable, g) {
            SemanticClass::Drivable
        } else {
            SemanticClass::Unknown
        };
        best = (t, class);
    }
    for ob in &spec.obstacles {
        if let Some(t) = ob.intersect(o, d) {
            if t < best.0 {
                best = (t, SemanticClass::Obstacle);
            }
        }
    }
    if best.0.is_finite() {
        best
    } else {
        (0.0, SemanticClass::Unknown)
    }
}

fn colorize(depth: &DepthImage, sem: &SemanticImage, max_range: f64) -> Vec<[u8; 3]> {
    depth
        .data()
        .iter()
        .zip(sem.data())
        .map(|(&d, &class)| {
            let shade = if d > 0.0 { 1.0 - 0.6 * (d / max_range).min(1.0) } else { 1.0 };
            let base: [f64; 3] = match class {
                SemanticClass::Drivable => [150.0, 150.0, 140.0],
                SemanticClass::Obstacle => [190.0, 70.0, 50.0],
                SemanticClass::Unknown if d > 0.0 => [90.0, 140.0, 70.0],
                SemanticClass::Unknown => [170.0, 200.0, 235.0],
            };
            base.map(|x| (x * shade).round() as u8)
        })
        .collect()
}

/// Renders the scene from the robot's camera and builds the ground-truth
/// costmap from the noise-free render. Pure in `(spec, cam, seed)`.
pub fn generate_scene(spec: &SceneSpec, cam: &CameraModel, seed: u64) -> Result<SceneRender> {
    spec.validate()?;
    cam.validate()?;
    let eye = camera_world_pose(spec, cam);
    if eye[2] <= 0.0 {
        return Err(Error::InvalidScene("camera must be above the ground plane".into()));
    }
    if spec.obstacles.iter().any(|o| o.contains(eye)) {
        return Err(Error::InvalidScene("camera is inside an obstacle".into()));
    }

    let (clean_depth, clean_sem) = ray_cast(spec, cam);
    let ground_truth = perceive(
        &clean_depth,
        &clean_sem,
        cam,
        &RobotFootprint::default(),
        &BuildOptions::default(),
    )?;

    let mut depth = clean_depth.clone();
    let mut sem = clean_sem;
    let noise = spec.noise;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    for v in 0..cam.height {
        for u in 0..cam.width {
            // Fixed draws per pixel keep the stream aligned across classes.
            let z: f64 = normal.sample(&mut rng);
            let flip: f64 = rng.random();
            let d = depth.get(u, v);
            if d > 0.0 && noise.depth_sigma > 0.0 {
                let nd = d + noise.depth_sigma * z;
                if nd > 0.0 && nd <= cam.max_range {
                    depth.set(u, v, nd);
                } else {
                    depth.set(u, v, 0.0);
                    sem.set(u, v, SemanticClass::Unknown);
                }
            }
            match sem.get(u, v) {
                SemanticClass::Drivable if flip < noise.misclass_drivable => {
                    sem.set(u, v, SemanticClass::Obstacle)
                }
                SemanticClass::Obstacle if flip < noise.misclass_obstacle => {
                    sem.set(u, v, SemanticClass::Drivable)
                }
                _ => {}
            }
        }
    }
    let pixels = colorize(&depth, &sem, cam.max_range);
    let rgb = RgbRef::Blob(encode_ppm(cam.width, cam.height, &pixels, &[]));
    Ok(SceneRender {
        depth,
        semantic: sem,
        rgb,
        ground_truth,
    })
}

/// A random cluttered scene in front of a robot at the world origin.
pub fn random_scene(seed: u64, noise: NoiseSpec) -> SceneSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let drivable = vec![
        Point2::new(-2.0, -rng.random_range(2.5..6.0)),
        Point2::new(12.0, -rng.random_range(3.0..7.5)),
        Point2::new(12.0, rng.random_range(3.0..7.5)),
        Point2::new(-2.0, rng.random_range(2.5..6.0)),
    ];
    let count = rng.random_range(1..=4usize);
    let mut obstacles = Vec::with_capacity(count);
    while obstacles.len() < count {
        let center = Point2::new(rng.random_range(2.5..8.0), rng.random_range(-3.0..3.0));
        let height = rng.random_range(0.5..1.6);
        let ob = if rng.random_bool(0.5) {
            Obstacle::Box {
                center,
                half_x: rng.random_range(0.2..0.6),
                half_y: rng.random_range(0.2..0.6),
                yaw: rng.random_range(-1.0..1.0),
                height,
            }
        } else {
            Obstacle::Cylinder {
                center,
                radius: rng.random_range(0.2..0.5),
                height,
            }
        };
        if center.norm() > 2.0 {
            obstacles.push(ob);
        }
    }
    SceneSpec {
        extent: [-4.0, -10.0, 16.0, 10.0],
        obstacles,
        drivable,
        robot_pose: Pose2D::default(),
        noise,
    }
}
