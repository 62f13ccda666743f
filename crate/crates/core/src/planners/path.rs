use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::costmap::{Cell, Costmap};
use crate::error::{Error, Result};
use crate::geometry::{Point2, Pose2D};

/// Intermediate nodes per planned path; the goal pose is appended as the last
/// node.
pub const PATH_NODES: usize = 24;
pub const TOTAL_NODES: usize = PATH_NODES + 1;

/// 8-connected chain of Free cells from the start cell to the goal cell.
#[derive(Clone, Debug, PartialEq)]
pub struct GridPath {
    cells: Vec<Cell>,
    points: Vec<Point2>,
    length: f64,
}

pub(crate) fn adjacent8(a: Cell, b: Cell) -> bool {
    let dr = a.0.abs_diff(b.0);
    let dc = a.1.abs_diff(b.1);
    dr <= 1 && dc <= 1 && (dr + dc) > 0
}

impl GridPath {
    pub fn new(map: &Costmap, cells: Vec<Cell>) -> Result<Self> {
        if cells.is_empty() {
            return Err(Error::contract("grid path needs at least one cell"));
        }
        let mut straight = 0u64;
        let mut diagonal = 0u64;
        for w in cells.windows(2) {
            if !adjacent8(w[0], w[1]) {
                return Err(Error::contract(format!("cells {:?} and {:?} are not adjacent", w[0], w[1])));
            }
            if w[0].0 != w[1].0 && w[0].1 != w[1].1 {
                diagonal += 1;
            } else {
                straight += 1;
            }
        }
        if let Some(c) = cells.iter().find(|&&c| c.0 >= map.height() || c.1 >= map.width() || !map.is_free(c)) {
            return Err(Error::contract(format!("cell {c:?} is not a free cell")));
        }
        let points = cells.iter().map(|&c| map.cell_center(c)).collect();
        let length = (straight as f64 + diagonal as f64 * std::f64::consts::SQRT_2) * map.resolution();
        Ok(Self { cells, points, length })
    }

    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    /// Cell centers in the map frame.
    pub fn points(&self) -> &[Point2] {
        &self.points
    }

    /// Metric length: 1 or sqrt(2) resolutions per step.
    pub fn length(&self) -> f64 {
        self.length
    }
}

/// The fixed-size path: 24 intermediate positions plus the goal pose.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlannedPath {
    nodes: Vec<Point2>,
    goal: Pose2D,
}

impl PlannedPath {
    pub fn new(nodes: Vec<Point2>, goal: Pose2D) -> Result<Self> {
        if nodes.len() != PATH_NODES {
            return Err(Error::contract(format!(
                "planned path needs {PATH_NODES} intermediate nodes, got {}",
                nodes.len()
            )));
        }
        if !goal.is_finite() || nodes.iter().any(|p| !p.is_finite()) {
            return Err(Error::contract("planned path coordinates must be finite"));
        }
        Ok(Self { nodes, goal })
    }

    pub fn nodes(&self) -> &[Point2] {
        &self.nodes
    }

    pub fn goal(&self) -> Pose2D {
        self.goal
    }

    /// All 25 positions, goal last.
    pub fn positions(&self) -> Vec<Point2> {
        let mut v = self.nodes.clone();
        v.push(self.goal.position());
        v
    }

    /// The same path expressed in the frame of which `frame` is a pose.
    pub fn transformed(&self, frame: &Pose2D) -> PlannedPath {
        PlannedPath {
            nodes: self.nodes.iter().map(|&p| frame.transform_point(p)).collect(),
            goal: frame.compose(&self.goal),
        }
    }

    /// CSV with header `x_m,y_m,theta_rad`: 24 rows of `x,y` and a final goal
    /// row `x,y,theta`. `comments` become leading `#` lines.
    pub fn to_csv(&self, comments: &[String]) -> String {
        let mut s = String::new();
        for c in comments {
            let _ = writeln!(s, "# {c}");
        }
        s.push_str("x_m,y_m,theta_rad\n");
        for p in &self.nodes {
            let _ = writeln!(s, "{},{}", p.x, p.y);
        }
        let _ = writeln!(s, "{},{},{}", self.goal.x, self.goal.y, self.goal.theta);
        s
    }

    pub fn parse_csv(text: &str) -> Result<Self> {
        let mut offset = 0usize;
        let mut rows = Vec::new();
        let mut header_seen = false;
        for line in text.split_inclusive('\n') {
            let start = offset;
            offset += line.len();
            let l = line.trim_end_matches(['\n', '\r']);
            if l.starts_with('#') || l.trim().is_empty() {
                continue;
            }
            if !header_seen {
                if l.trim() != "x_m,y_m,theta_rad" && l.trim() != "x_m,y_m" {
                    return Err(Error::parse(start, "expected header `x_m,y_m,theta_rad`"));
                }
                header_seen = true;
                continue;
            }
            let mut vals = Vec::with_capacity(3);
            let mut col = 0usize;
            for field in l.split(',') {
                let v: f64 = field
                    .trim()
                    .parse()
                    .ok()
                    .filter(|v: &f64| v.is_finite())
                    .ok_or_else(|| Error::parse(start + col, format!("invalid number `{field}`")))?;
                vals.push(v);
                col += field.len() + 1;
            }
            rows.push((start, vals));
        }
        if rows.len() != TOTAL_NODES {
            return Err(Error::parse(text.len(), format!("expected {TOTAL_NODES} rows, found {}", rows.len())));
        }
        let mut nodes = Vec::with_capacity(PATH_NODES);
        for (start, vals) in &rows[..PATH_NODES] {
            if vals.len() != 2 {
                return Err(Error::parse(*start, "intermediate rows carry exactly `x,y`"));
            }
            nodes.push(Point2::new(vals[0], vals[1]));
        }
        let (start, last) = &rows[PATH_NODES];
        if last.len() != 3 {
            return Err(Error::parse(*start, "goal row must carry `x,y,theta`"));
        }
        PlannedPath::new(nodes, Pose2D::new(last[0], last[1], last[2]))
    }
}

/// Drops interior vertices that lie on the line through their neighbours.
pub(crate) fn merge_collinear(pts: &[Point2]) -> Vec<Point2> {
    let mut out: Vec<Point2> = Vec::with_capacity(pts.len());
    for &p in pts {
        if out.last() == Some(&p) {
            continue;
        }
        while out.len() >= 2 {
            let a = out[out.len() - 2];
            let b = out[out.len() - 1];
            let ab = b - a;
            let bp = p - b;
            if ab.cross(bp).abs() <= 1e-12 * ab.norm() * bp.norm() && ab.dot(bp) > 0.0 {
                out.pop();
            } else {
                break;
            }
        }
        out.push(p);
    }
    out
}

/// Points at fractions `i / (count + 1)` of arc length, `i = 1..=count`.
pub(crate) fn arc_length_samples(pts: &[Point2], count: usize) -> Vec<Point2> {
    let poly = merge_collinear(pts);
    let cum: Vec<f64> = std::iter::once(0.0)
        .chain(poly.windows(2).scan(0.0, |acc, w| {
            *acc += w[0].dist(w[1]);
            Some(*acc)
        }))
        .collect();
    let total = *cum.last().unwrap_or(&0.0);
    if poly.is_empty() {
        return Vec::new();
    }
    if total <= 0.0 {
        return vec![poly[0]; count];
    }
    let mut out = Vec::with_capacity(count);
    let mut seg = 0usize;
    for i in 1..=count {
        let s = total * i as f64 / (count + 1) as f64;
        while seg + 2 < cum.len() && cum[seg + 1] < s {
            seg += 1;
        }
        let len = cum[seg + 1] - cum[seg];
        let t = if len > 0.0 { ((s - cum[seg]) / len).clamp(0.0, 1.0) } else { 0.0 };
        out.push(poly[seg].lerp(poly[seg + 1], t));
    }
    out
}

/// Arc-length resampling of the cell-center polyline into 24 evenly spaced
/// nodes, followed by the goal pose.
pub fn resample(path: &GridPath, goal: Pose2D) -> PlannedPath {
    PlannedPath {
        nodes: arc_length_samples(path.points(), PATH_NODES),
        goal,
    }
}

/// Resampling of an arbitrary polyline.
pub fn resample_polyline(pts: &[Point2], goal: Pose2D) -> Result<PlannedPath> {
    if pts.is_empty() {
        return Err(Error::contract("cannot resample an empty polyline"));
    }
    PlannedPath::new(arc_length_samples(pts, PATH_NODES), goal)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::costmap::{CellState, GridGeometry};

    fn free_map(w: usize, h: usize) -> Costmap {
        Costmap::new(
            GridGeometry {
                width: w,
                height: h,
                resolution: 0.1,
                origin: Pose2D::default(),
            },
            CellState::Free,
        )
        .unwrap()
    }

    #[test]
    fn straight_segment_resamples_uniformly() {
        let pts = [Point2::new(0.0, 0.0), Point2::new(2.5, 0.0)];
        let p = resample_polyline(&pts, Pose2D::new(2.5, 0.0, 0.0)).unwrap();
        for (i, n) in p.nodes().iter().enumerate() {
            assert!((n.x - 0.1 * (i + 1) as f64).abs() < 1e-12 && n.y == 0.0);
        }
        assert_eq!(p.positions().len(), 25);
    }

    #[test]
    fn l_shape_puts_tenth_node_on_corner() {
        let pts = [Point2::new(0.0, 0.0), Point2::new(1.0, 0.0), Point2::new(1.0, 1.5)];
        let p = resample_polyline(&pts, Pose2D::new(1.0, 1.5, 0.0)).unwrap();
        let n10 = p.nodes()[9];
        assert!((n10.x - 1.0).abs() < 1e-12 && n10.y.abs() < 1e-12);
        let n11 = p.nodes()[10];
        assert!((n11.x - 1.0).abs() < 1e-12 && (n11.y - 0.1).abs() < 1e-12);
    }

    #[test]
    fn zero_length_path_repeats_start() {
        let m = free_map(5, 5);
        let gp = GridPath::new(&m, vec![(2, 2)]).unwrap();
        assert_eq!(gp.length(), 0.0);
        let goal = Pose2D::new(0.25, 0.25, 1.0);
        let p = resample(&gp, goal);
        assert!(p.nodes().iter().all(|&n| n == m.cell_center((2, 2))));
        assert_eq!(p.goal(), goal);
    }

    #[test]
    fn grid_path_validation() {
        let mut m = free_map(5, 5);
        assert!(GridPath::new(&m, vec![(0, 0), (0, 2)]).is_err());
        m.set((1, 1), CellState::Occupied);
        assert!(GridPath::new(&m, vec![(0, 0), (1, 1)]).is_err());
        let p = GridPath::new(&m, vec![(0, 0), (1, 0), (2, 1)]).unwrap();
        assert!((p.length() - 0.1 * (1.0 + std::f64::consts::SQRT_2)).abs() < 1e-15);
    }

    #[test]
    fn csv_roundtrip() {
        let nodes: Vec<Point2> = (1..=24).map(|i| Point2::new(i as f64 * 0.1, -0.5)).collect();
        let p = PlannedPath::new(nodes, Pose2D::new(2.5, -0.5, 0.25)).unwrap();
        let text = p.to_csv(&["seed 3".into()]);
        assert_eq!(text.lines().filter(|l| !l.starts_with('#')).count(), 26);
        assert_eq!(PlannedPath::parse_csv(&text).unwrap(), p);
        let broken = text.replace("2.5,-0.5,0.25", "2.5,-0.5");
        assert!(matches!(PlannedPath::parse_csv(&broken), Err(Error::Parse { .. })));
    }
}
