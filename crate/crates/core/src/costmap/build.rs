use std::collections::{BTreeMap, BTreeSet};

use crate::error::{Error, Result};
use crate::geometry::{convex_hull, Point2};
use crate::scene::{
    backproject, filter_outliers, CameraModel, DepthImage, Frame, LabeledPoint, PointCloud,
    SemanticClass, SemanticImage, DEFAULT_OUTLIER_K, DEFAULT_OUTLIER_STD_MULT,
};

use super::raster::fill_convex_polygon;
use super::{CellState, Costmap, GridGeometry};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RobotFootprint {
    /// Along body x, meters.
    pub length: f64,
    /// Along body y, meters.
    pub width: f64,
    pub inflation_radius: f64,
    pub constriction_radius: f64,
}

impl Default for RobotFootprint {
    fn default() -> Self {
        Self {
            length: 1.0,
            width: 0.5,
            inflation_radius: 0.5,
            constriction_radius: 0.5,
        }
    }
}

impl RobotFootprint {
    pub fn validate(&self) -> Result<()> {
        if [self.length, self.width, self.inflation_radius, self.constriction_radius]
            .iter()
            .all(|v| v.is_finite() && *v > 0.0)
        {
            Ok(())
        } else {
            Err(Error::contract("footprint dimensions and radii must be positive"))
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BuildOptions {
    pub grid: GridGeometry,
    /// One hull over all obstacle points instead of one hull per cluster.
    pub single_hull: bool,
    /// Adds the robot's own footprint, grown by the constriction radius, to
    /// the drivable region so the robot never sits in a blind spot.
    pub seed_footprint: bool,
}

impl Default for BuildOptions {
    fn default() -> Self {
        Self {
            grid: GridGeometry::local_default(),
            single_hull: false,
            seed_footprint: true,
        }
    }
}

/// Camera-frame cloud to the projected body frame: rigid transform, then the
/// vertical coordinate is dropped (stored as zero).
pub fn project_to_body(pc: &PointCloud, cam: &CameraModel) -> Result<PointCloud> {
    if pc.frame() != Frame::Camera {
        return Err(Error::contract("project_to_body expects a camera-frame cloud"));
    }
    let points = pc
        .points()
        .iter()
        .map(|p| {
            let b = cam.camera_to_body([p.x, p.y, p.z]);
            LabeledPoint::new(b[0], b[1], 0.0, p.class)
        })
        .collect();
    PointCloud::new(Frame::ProjectedBody, points)
}

/// Offsets `(dr, dc)` of all cells whose centers lie within `radius` of the
/// center cell.
pub fn disc_offsets(radius: f64, resolution: f64) -> Vec<(i64, i64)> {
    let k = radius / resolution;
    let lim = k.floor() as i64 + 1;
    let mut out = Vec::new();
    for dr in -lim..=lim {
        for dc in -lim..=lim {
            if ((dr * dr + dc * dc) as f64) <= k * k + 1e-6 {
                out.push((dr, dc));
            }
        }
    }
    out
}

/// Free cells within `radius` of any in-bounds non-Free cell become Unknown.
pub fn constrict_free(map: &Costmap, radius: f64) -> Costmap {
    let offsets = disc_offsets(radius, map.resolution());
    let mut out = map.clone();
    for r in 0..map.height() {
        for c in 0..map.width() {
            if map.get((r, c)) == CellState::Free {
                continue;
            }
            for &(dr, dc) in &offsets {
                let (rr, cc) = (r as i64 + dr, c as i64 + dc);
                if map.get_signed(rr, cc) == Some(CellState::Free) {
                    out.set((rr as usize, cc as usize), CellState::Unknown);
                }
            }
        }
    }
    out
}

/// Every cell within `radius` of an Occupied cell becomes Occupied.
pub fn inflate_occupied(map: &Costmap, radius: f64) -> Costmap {
    let offsets = disc_offsets(radius, map.resolution());
    let mut out = map.clone();
    for r in 0..map.height() {
        for c in 0..map.width() {
            if map.get((r, c)) != CellState::Occupied {
                continue;
            }
            for &(dr, dc) in &offsets {
                let (rr, cc) = (r as i64 + dr, c as i64 + dc);
                if map.get_signed(rr, cc).is_some() {
                    out.set((rr as usize, cc as usize), CellState::Occupied);
                }
            }
        }
    }
    out
}

/// Groups obstacle points by the grid cell they fall in and returns the
/// 8-connected clusters of points, in a deterministic order.
fn obstacle_clusters(map: &Costmap, pts: &[Point2]) -> Vec<Vec<Point2>> {
    let mut by_cell: BTreeMap<(i64, i64), Vec<Point2>> = BTreeMap::new();
    for &p in pts {
        by_cell.entry(map.signed_cell_of(p)).or_default().push(p);
    }
    let mut seen: BTreeSet<(i64, i64)> = BTreeSet::new();
    let mut clusters = Vec::new();
    for &start in by_cell.keys() {
        if !seen.insert(start) {
            continue;
        }
        let mut cluster = Vec::new();
        let mut stack = vec![start];
        while let Some((r, c)) = stack.pop() {
            cluster.extend_from_slice(&by_cell[&(r, c)]);
            for dr in -1..=1 {
                for dc in -1..=1 {
                    let n = (r + dr, c + dc);
                    if by_cell.contains_key(&n) && seen.insert(n) {
                        stack.push(n);
                    }
                }
            }
        }
        clusters.push(cluster);
    }
    clusters
}

/// Occupancy grid from a projected-body-frame cloud: drivable hull as Free,
/// obstacle hulls as Occupied, then constriction of Free and inflation of
/// Occupied.
pub fn build_costmap(pc: &PointCloud, footprint: &RobotFootprint, opts: &BuildOptions) -> Result<Costmap> {
    if pc.frame() != Frame::ProjectedBody {
        return Err(Error::contract("build_costmap expects a projected-body-frame cloud"));
    }
    footprint.validate()?;
    let mut map = Costmap::new(opts.grid, CellState::Unknown)?;

    let mut drivable: Vec<Point2> = Vec::new();
    let mut obstacles: Vec<Point2> = Vec::new();
    for p in pc.points() {
        match p.class {
            SemanticClass::Drivable => drivable.push(Point2::new(p.x, p.y)),
            SemanticClass::Obstacle => obstacles.push(Point2::new(p.x, p.y)),
            SemanticClass::Unknown => {}
        }
    }

    if drivable.len() >= 3 {
        if opts.seed_footprint {
            let hx = footprint.length / 2.0 + footprint.constriction_radius;
            let hy = footprint.width / 2.0 + footprint.constriction_radius;
            drivable.extend([
                Point2::new(-hx, -hy),
                Point2::new(hx, -hy),
                Point2::new(hx, hy),
                Point2::new(-hx, hy),
            ]);
        }
        let hull = convex_hull(&drivable);
        for cell in fill_convex_polygon(&map.geometry(), &hull) {
            map.set(cell, CellState::Free);
        }
    }

    if !obstacles.is_empty() {
        let geom = map.geometry();
        let groups = if opts.single_hull {
            vec![obstacles]
        } else {
            obstacle_clusters(&map, &obstacles)
        };
        for group in groups {
            let hull = convex_hull(&group);
            for cell in fill_convex_polygon(&geom, &hull) {
                map.set(cell, CellState::Occupied);
            }
            for p in &group {
                if let Some(cell) = map.cell_of(*p) {
                    map.set(cell, CellState::Occupied);
                }
            }
        }
    }

    let map = constrict_free(&map, footprint.constriction_radius);
    Ok(inflate_occupied(&map, footprint.inflation_radius))
}

/// Images to costmap: backprojection, outlier removal, projection to the
/// body frame and grid construction.
pub fn perceive(
    depth: &DepthImage,
    semantic: &SemanticImage,
    cam: &CameraModel,
    footprint: &RobotFootprint,
    opts: &BuildOptions,
) -> Result<Costmap> {
    let cloud = backproject(depth, semantic, cam)?;
    let filtered = filter_outliers(&cloud, DEFAULT_OUTLIER_K, DEFAULT_OUTLIER_STD_MULT)?;
    let body = project_to_body(&filtered.cloud, cam)?;
    build_costmap(&body, footprint, opts)
}
