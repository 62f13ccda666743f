//! Goal-directed navigation: global planning on a world map, intermediate
//! goal generation within the camera's view, and closed-loop simulation with
//! a local planner working on sensed costmaps.

mod sim;
mod world;

use crate::costmap::ray_cells;
use crate::error::{Error, Result};
use crate::geometry::{normalize_angle, Point2, Pose2D};
use crate::planners::{plan_polyline, snap_goal, PlannerParams};
use crate::scene::CameraModel;

pub use sim::{simulate_navigation, sense, LegRecord, NavConfig, NavigationReport, Outcome, Sensed};
pub use world::{corridor_world, open_world, Scenario, WorldMap};

/// Largest spacing between consecutive global waypoints, meters.
pub const WAYPOINT_SPACING: f64 = 1.0;

/// True iff `m` is seen by a camera on a robot at `n`: within range, within
/// the horizontal field of view of `n`'s heading and, unless `fov_only`, not
/// hidden behind an Occupied cell.
pub fn visible(m: &Pose2D, n: &Pose2D, cam: &CameraModel, map: &WorldMap, fov_only: bool) -> bool {
    let d = m.dist(n);
    if d > cam.max_range {
        return false;
    }
    if d > 0.0 {
        let bearing = (m.y - n.y).atan2(m.x - n.x);
        if normalize_angle(bearing - n.theta).abs() > cam.horizontal_fov / 2.0 {
            return false;
        }
    }
    fov_only || map.line_of_sight(n.position(), m.position(), false)
}

/// Start pose, waypoints and goal pose in the world frame.
#[derive(Clone, Debug, PartialEq)]
pub struct WorldPath {
    poses: Vec<Pose2D>,
}

impl WorldPath {
    pub fn new(poses: Vec<Pose2D>) -> Result<Self> {
        if poses.len() < 2 {
            return Err(Error::contract("a world path needs a start and a goal pose"));
        }
        Ok(Self { poses })
    }

    /// Start, then waypoints whose heading points at the next position, then
    /// the goal.
    pub fn from_points(start: &Pose2D, pts: &[Point2], goal: &Pose2D) -> Result<Self> {
        let mut poses = vec![*start];
        let mut heading = start.theta;
        for i in 0..pts.len() {
            let next = pts.get(i + 1).copied().unwrap_or(goal.position());
            let d = next - pts[i];
            if d.norm() > 0.0 {
                heading = d.y.atan2(d.x);
            }
            poses.push(Pose2D::new(pts[i].x, pts[i].y, heading));
        }
        poses.push(*goal);
        Self::new(poses)
    }

    pub fn poses(&self) -> &[Pose2D] {
        &self.poses
    }

    pub fn start(&self) -> Pose2D {
        self.poses[0]
    }

    pub fn goal(&self) -> Pose2D {
        *self.poses.last().expect("at least two poses")
    }

    /// Number of waypoints between start and goal.
    pub fn waypoint_count(&self) -> usize {
        self.poses.len() - 2
    }

    pub fn length(&self) -> f64 {
        self.poses.windows(2).map(|w| w[0].dist(&w[1])).sum()
    }
}

/// Intermediate goals with the cursor pose each was inserted from.
#[derive(Clone, Debug, PartialEq)]
pub struct GoalArray {
    pub goals: Vec<Pose2D>,
    pub cursors: Vec<Pose2D>,
    pub range: f64,
}

/// Walks the waypoints with a cursor starting at the path's start. Waypoint
/// `i` becomes a goal when it is visible but `i + 1` is not, or when `i + 1`
/// is out of range. The goal pose is always appended last.
pub fn generate_intermediate_goals(path: &WorldPath, cam: &CameraModel, map: &WorldMap, fov_only: bool) -> Result<GoalArray> {
    let p = path.poses();
    let m = path.waypoint_count();
    let r = cam.max_range;
    let vis = |a: &Pose2D, b: &Pose2D| visible(a, b, cam, map, fov_only);
    let mut cur = p[0];
    if m > 0 && !vis(&p[1], &cur) {
        return Err(Error::FrameGap { index: 1 });
    }
    let mut goals = Vec::new();
    let mut cursors = Vec::new();
    for i in 1..=m {
        let vi = vis(&p[i], &cur);
        let trigger = (vi && !vis(&p[i + 1], &cur)) || p[i + 1].dist(&cur) > r;
        if trigger {
            if !vi {
                return Err(Error::FrameGap { index: i });
            }
            goals.push(p[i]);
            cursors.push(cur);
            cur = p[i];
        }
    }
    if !vis(&p[m + 1], &cur) {
        return Err(Error::FrameGap { index: m + 1 });
    }
    goals.push(p[m + 1]);
    cursors.push(cur);
    Ok(GoalArray { goals, cursors, range: r })
}

/// Inserts evenly spaced points so that no gap exceeds `max_spacing`.
pub fn densify(pts: &[Point2], max_spacing: f64) -> Vec<Point2> {
    let mut out: Vec<Point2> = pts.first().copied().into_iter().collect();
    for w in pts.windows(2) {
        let n = (w[0].dist(w[1]) / max_spacing).ceil().max(1.0) as usize;
        for k in 1..=n {
            out.push(w[0].lerp(w[1], k as f64 / n as f64));
        }
    }
    out
}

/// Plans on the inflated world map with the goal snapped to free space and
/// densifies the result to at most [`WAYPOINT_SPACING`].
pub fn plan_global(map: &WorldMap, start: &Pose2D, goal: &Pose2D, params: &PlannerParams) -> Result<WorldPath> {
    let planning = map.planning();
    let goal = snap_goal(planning, goal)?;
    if !planning.is_free_point(start.position()) {
        return Err(Error::NoPathFound("start is not on free space".into()));
    }
    let poly = plan_polyline(planning, start, &goal, params)?;
    let dense = densify(&poly, WAYPOINT_SPACING);
    let inner = if dense.len() > 2 { &dense[1..dense.len() - 1] } else { &[][..] };
    WorldPath::from_points(start, inner, &goal)
}

/// Cells on the segment from `a` to `b`, without the cell of `a`.
pub(crate) fn sight_cells(map: &WorldMap, a: Point2, b: Point2) -> Vec<(usize, usize)> {
    let cells = ray_cells(&map.grid().geometry(), a, b);
    let own = map.grid().cell_of(a);
    cells.into_iter().filter(|c| Some(*c) != own).collect()
}
