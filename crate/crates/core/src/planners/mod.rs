//! Classical planners over costmaps and the fixed 25-node path they feed.

mod grid;
mod path;
mod sampling;

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::costmap::{constrict_free, CellState, Costmap};
use crate::error::{Error, Result};
use crate::geometry::{Point2, Pose2D};

pub use grid::{astar, jps};
pub use path::{resample, resample_polyline, GridPath, PlannedPath, PATH_NODES, TOTAL_NODES};
pub use sampling::{prm, rasterize_polyline, rrt_star, shortcut, RrtStarOutput};

pub const COLLISION_STEP: f64 = 0.05;
/// Largest extra clearance, in cells, tried by [`plan_to_goal`].
pub const MAX_CLEARANCE_CELLS: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Astar,
    Jps,
    RrtStar,
    Prm,
}

impl Algorithm {
    pub const ALL: [Algorithm; 4] = [Algorithm::Astar, Algorithm::Jps, Algorithm::RrtStar, Algorithm::Prm];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Astar => "astar",
            Algorithm::Jps => "jps",
            Algorithm::RrtStar => "rrtstar",
            Algorithm::Prm => "prm",
        }
    }

    pub fn is_sampling(self) -> bool {
        matches!(self, Algorithm::RrtStar | Algorithm::Prm)
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "astar" | "a*" => Ok(Algorithm::Astar),
            "jps" => Ok(Algorithm::Jps),
            "rrtstar" | "rrt*" => Ok(Algorithm::RrtStar),
            "prm" => Ok(Algorithm::Prm),
            other => Err(Error::contract(format!("unknown planner `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RrtStarParams {
    pub step: f64,
    pub goal_bias: f64,
    pub max_iters: usize,
    pub rewire_gamma: f64,
    /// Upper bound of the rewire radius, meters.
    pub rewire_max: f64,
    pub goal_tolerance: f64,
}

impl Default for RrtStarParams {
    fn default() -> Self {
        Self {
            step: 0.3,
            goal_bias: 0.05,
            max_iters: 5000,
            rewire_gamma: 2.0,
            rewire_max: 0.9,
            goal_tolerance: 0.15,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrmParams {
    pub sample_count: usize,
    pub k_neighbors: usize,
}

impl Default for PrmParams {
    fn default() -> Self {
        Self {
            sample_count: 800,
            k_neighbors: 10,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlannerParams {
    pub algorithm: Algorithm,
    pub seed: u64,
    pub rrtstar: RrtStarParams,
    pub prm: PrmParams,
    /// Shortcut smoothing of sampling-planner output.
    pub smoothing: bool,
    pub collision_step: f64,
}

impl PlannerParams {
    pub fn new(algorithm: Algorithm, seed: u64) -> Self {
        Self {
            algorithm,
            seed,
            rrtstar: RrtStarParams::default(),
            prm: PrmParams::default(),
            smoothing: true,
            collision_step: COLLISION_STEP,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let r = &self.rrtstar;
        let ok = r.step > 0.0
            && (0.0..1.0).contains(&r.goal_bias)
            && r.max_iters > 0
            && r.rewire_gamma > 0.0
            && r.rewire_max > 0.0
            && r.goal_tolerance > 0.0
            && self.prm.sample_count > 0
            && self.prm.k_neighbors > 0
            && self.collision_step > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::contract("planner parameters must be positive with goal_bias in [0, 1)"))
        }
    }
}

impl Default for PlannerParams {
    fn default() -> Self {
        Self::new(Algorithm::Astar, 0)
    }
}

/// True iff evenly spaced samples along `a -> b`, endpoints included and no
/// more than `step` apart, all fall on Free cells.
pub fn collision_check(map: &Costmap, a: Point2, b: Point2, step: f64) -> bool {
    let n = (a.dist(b) / step).ceil().max(1.0) as usize;
    (0..=n).all(|k| map.is_free_point(a.lerp(b, k as f64 / n as f64)))
}

/// The goal itself when it lies on a Free cell, otherwise the nearest Free
/// cell center (ties to the smaller row, then column). Heading is kept.
pub fn snap_goal(map: &Costmap, goal: &Pose2D) -> Result<Pose2D> {
    if map.is_free_point(goal.position()) {
        return Ok(*goal);
    }
    let mut best: Option<(f64, (usize, usize))> = None;
    for cell in map.free_cells() {
        let d = map.cell_center(cell).dist(goal.position());
        if best.is_none_or(|(bd, _)| d < bd) {
            best = Some((d, cell));
        }
    }
    let (_, cell) = best.ok_or(Error::NoFreeSpace)?;
    let p = map.cell_center(cell);
    Ok(Pose2D {
        x: p.x,
        y: p.y,
        theta: goal.theta,
    })
}

fn endpoints(map: &Costmap, start: &Pose2D, goal: &Pose2D) -> Result<((usize, usize), (usize, usize))> {
    let s = map
        .cell_of(start.position())
        .filter(|&c| map.is_free(c))
        .ok_or_else(|| Error::contract("start must lie on a free cell"))?;
    let g = map
        .cell_of(goal.position())
        .filter(|&c| map.is_free(c))
        .ok_or_else(|| Error::contract("goal must lie on a free cell; snap it first"))?;
    Ok((s, g))
}

fn no_path(algo: Algorithm) -> Error {
    Error::NoPathFound(format!("{algo} found no path"))
}

/// Continuous waypoints from start to goal. Grid planners yield the
/// cell-center chain with exact start and goal positions at its ends.
pub fn plan_polyline(map: &Costmap, start: &Pose2D, goal: &Pose2D, params: &PlannerParams) -> Result<Vec<Point2>> {
    params.validate()?;
    let (s, g) = endpoints(map, start, goal)?;
    let (a, b) = (start.position(), goal.position());
    let step = params.collision_step;
    match params.algorithm {
        Algorithm::Astar | Algorithm::Jps => {
            let cells = if params.algorithm == Algorithm::Astar {
                astar(map, s, g)
            } else {
                jps(map, s, g)
            }
            .ok_or_else(|| no_path(params.algorithm))?;
            let mut pts: Vec<Point2> = cells.iter().map(|&c| map.cell_center(c)).collect();
            pts[0] = a;
            if pts.len() == 1 {
                pts.push(b);
            } else {
                *pts.last_mut().expect("nonempty") = b;
            }
            Ok(pts)
        }
        Algorithm::RrtStar | Algorithm::Prm => {
            let raw = if params.algorithm == Algorithm::RrtStar {
                let out = rrt_star(map, a, b, &params.rrtstar, step, params.seed);
                (!out.polyline.is_empty()).then_some(out.polyline)
            } else {
                prm(map, a, b, &params.prm, step, params.seed)
            }
            .ok_or_else(|| no_path(params.algorithm))?;
            Ok(if params.smoothing { shortcut(map, &raw, step) } else { raw })
        }
    }
}

/// Plans an 8-connected Free-cell path. Sampling planners are smoothed (if
/// enabled) and rasterized back onto the grid.
pub fn plan(map: &Costmap, start: &Pose2D, goal: &Pose2D, params: &PlannerParams) -> Result<GridPath> {
    params.validate()?;
    let (s, g) = endpoints(map, start, goal)?;
    let cells = match params.algorithm {
        Algorithm::Astar => astar(map, s, g).ok_or_else(|| no_path(params.algorithm))?,
        Algorithm::Jps => jps(map, s, g).ok_or_else(|| no_path(params.algorithm))?,
        Algorithm::RrtStar | Algorithm::Prm => {
            let poly = plan_polyline(map, start, goal, params)?;
            let cells = rasterize_polyline(map, &poly, params.collision_step);
            if cells.first() != Some(&s) || cells.last() != Some(&g) {
                return Err(no_path(params.algorithm));
            }
            cells
        }
    };
    GridPath::new(map, cells)
}

/// Outcome of the full local pipeline.
#[derive(Clone, Debug, PartialEq)]
pub struct GoalPlan {
    pub snapped_goal: Pose2D,
    pub grid: GridPath,
    pub path: PlannedPath,
    /// Extra clearance (cells) that was needed for every chord to be free.
    pub clearance: usize,
}

/// True iff every chord of `start -> p_1 -> ... -> p_25` passes
/// [`collision_check`].
pub fn path_is_clear(map: &Costmap, start: Point2, path: &PlannedPath, step: f64) -> bool {
    let mut prev = start;
    for p in path.positions() {
        if !collision_check(map, prev, p, step) {
            return false;
        }
        prev = p;
    }
    true
}

/// Snap, plan and resample. Resampled chords can cut corners of the cell
/// path; when that happens the search is repeated on maps with 1, 2 and 3
/// cells of extra clearance before giving up.
pub fn plan_to_goal(map: &Costmap, start: &Pose2D, goal: &Pose2D, params: &PlannerParams) -> Result<GoalPlan> {
    let snapped = snap_goal(map, goal)?;
    let s = map
        .cell_of(start.position())
        .filter(|&c| map.is_free(c))
        .ok_or_else(|| Error::NoPathFound("start is not on a free cell".into()))?;
    let g = map.cell_of(snapped.position()).expect("snapped goal is on the map");
    let mut last_err = None;
    for clearance in 0..=MAX_CLEARANCE_CELLS {
        let planning = if clearance == 0 {
            map.clone()
        } else {
            let mut m = constrict_free(map, clearance as f64 * map.resolution());
            m.set(s, CellState::Free);
            m.set(g, CellState::Free);
            m
        };
        match plan(&planning, start, &snapped, params) {
            Ok(grid) => {
                let path = resample(&grid, snapped);
                if path_is_clear(map, start.position(), &path, params.collision_step) {
                    return Ok(GoalPlan {
                        snapped_goal: snapped,
                        grid,
                        path,
                        clearance,
                    });
                }
            }
            Err(e @ Error::NoPathFound(_)) => last_err = Some(e),
            Err(e) => return Err(e),
        }
    }
    Err(last_err.unwrap_or_else(|| Error::NoPathFound("no resampled path clears the obstacles".into())))
}

pub fn load_path(path: impl AsRef<Path>) -> Result<PlannedPath> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    PlannedPath::parse_csv(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::costmap::GridGeometry;

    fn map(w: usize, h: usize) -> Costmap {
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
    fn collision_check_examples() {
        let mut m = map(20, 20);
        let a = Point2::new(0.15, 0.95);
        let b = Point2::new(1.85, 0.95);
        assert!(collision_check(&m, a, b, COLLISION_STEP));
        assert!(collision_check(&m, a, a, COLLISION_STEP));
        m.set((9, 10), CellState::Occupied);
        assert!(!collision_check(&m, a, b, COLLISION_STEP));
    }

    #[test]
    fn collision_check_agrees_with_fine_supersampling() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        let mut m = map(30, 30);
        for _ in 0..30 {
            m.set((rng.random_range(0..30), rng.random_range(0..30)), CellState::Occupied);
        }
        for _ in 0..300 {
            let a = Point2::new(rng.random_range(0.0..3.0), rng.random_range(0.0..3.0));
            let b = a + Point2::new(rng.random_range(-0.4..0.4), rng.random_range(-0.4..0.4));
            let n = (a.dist(b) / 0.01).ceil().max(1.0) as usize;
            let fine = (0..=n).all(|k| m.is_free_point(a.lerp(b, k as f64 / n as f64)));
            // the coarse check never accepts a segment the fine one rejects
            // unless the blocked stretch is shorter than the coarse spacing
            if collision_check(&m, a, b, COLLISION_STEP) && !fine {
                let blocked: Vec<usize> = (0..=n)
                    .filter(|&k| !m.is_free_point(a.lerp(b, k as f64 / n as f64)))
                    .collect();
                let span = (blocked[blocked.len() - 1] - blocked[0]) as f64 * a.dist(b) / n as f64;
                assert!(span < COLLISION_STEP);
            }
        }
    }

    #[test]
    fn snapping() {
        let mut m = map(10, 10);
        let g = Pose2D::new(0.42, 0.37, 0.3);
        assert_eq!(snap_goal(&m, &g).unwrap(), g);
        for r in 0..10 {
            for c in 4..10 {
                m.set((r, c), CellState::Occupied);
            }
        }
        let inside = Pose2D::new(0.65, 0.55, -1.0);
        let s = snap_goal(&m, &inside).unwrap();
        assert!((s.x - 0.35).abs() < 1e-12 && (s.y - 0.55).abs() < 1e-12 && s.theta == -1.0);
        assert!(s.position().dist(inside.position()) <= 0.3 + 0.1);
        let full = Costmap::new(m.geometry(), CellState::Occupied).unwrap();
        assert!(matches!(snap_goal(&full, &inside), Err(Error::NoFreeSpace)));
    }

    #[test]
    fn all_planners_reach_goal_and_are_deterministic() {
        let mut m = map(40, 40);
        for r in 5..35 {
            m.set((r, 20), CellState::Occupied);
        }
        let start = Pose2D::new(0.55, 2.05, 0.0);
        let goal = Pose2D::new(3.55, 2.05, 0.0);
        for algo in Algorithm::ALL {
            let params = PlannerParams::new(algo, 5);
            let a = plan(&m, &start, &goal, &params).unwrap();
            let b = plan(&m, &start, &goal, &params).unwrap();
            assert_eq!(a, b, "{algo}");
            assert_eq!(a.cells().first(), m.cell_of(start.position()).as_ref());
            assert_eq!(a.cells().last(), m.cell_of(goal.position()).as_ref());
            let gp = plan_to_goal(&m, &start, &goal, &params).unwrap();
            assert!(path_is_clear(&m, start.position(), &gp.path, COLLISION_STEP));
            assert_eq!(gp.path.positions().len(), 25);
        }
    }

    #[test]
    fn unreachable_goal_is_no_path() {
        let mut m = map(20, 20);
        for r in 0..20 {
            m.set((r, 10), CellState::Occupied);
        }
        let start = Pose2D::new(0.25, 0.25, 0.0);
        let goal = Pose2D::new(1.85, 0.25, 0.0);
        for algo in Algorithm::ALL {
            let mut params = PlannerParams::new(algo, 1);
            params.rrtstar.max_iters = 500;
            params.prm.sample_count = 100;
            assert!(matches!(plan(&m, &start, &goal, &params), Err(Error::NoPathFound(_))), "{algo}");
        }
    }

    #[test]
    fn rrt_history_is_monotone() {
        let m = map(40, 40);
        let out = rrt_star(
            &m,
            Point2::new(0.25, 0.25),
            Point2::new(3.75, 3.25),
            &RrtStarParams {
                max_iters: 2000,
                ..RrtStarParams::default()
            },
            COLLISION_STEP,
            3,
        );
        assert!(out.cost.is_finite());
        assert!(out.history.windows(2).all(|w| w[1] <= w[0]));
        assert_eq!(*out.history.last().unwrap(), out.cost);
    }
}
