use std::fmt::{self, Write as _};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::costmap::{
    constrict_free, costmap_distance, disc_offsets, inflate_occupied, CellState, Costmap, GridGeometry,
};
use crate::error::{Error, Result};
use crate::evaluation::turning_cost;
use crate::geometry::{mix_seed, normalize_angle, Point2, Pose2D};
use crate::planners::{plan_to_goal, Algorithm, PlannerParams, COLLISION_STEP};
use crate::scene::CameraModel;

use super::{generate_intermediate_goals, plan_global, GoalArray, WorldMap, WorldPath};

/// Clearance kept by the start-cell escape region, meters.
const ESCAPE_CLEARANCE: f64 = 0.2;
/// Radius around the robot in which the escape region applies, meters.
const ESCAPE_RADIUS: f64 = 0.6;
const MIN_PROGRESS: f64 = 0.05;
/// Legs allowed toward one intermediate goal before the run is abandoned.
pub const MAX_ATTEMPTS_PER_GOAL: usize = 10;

#[derive(Clone, Debug)]
pub struct NavConfig {
    pub camera: CameraModel,
    pub local: PlannerParams,
    pub global: PlannerParams,
    /// Per-cell probability of flipping Free and Occupied when sensing.
    pub noise: f64,
    pub seed: u64,
    /// Visibility without the occlusion test when generating goals.
    pub fov_only: bool,
    pub goal_tolerance: f64,
    pub max_legs: usize,
    /// Motion and collision sampling step, meters.
    pub step: f64,
}

impl NavConfig {
    pub fn new(local: Algorithm, noise: f64, seed: u64) -> Self {
        Self {
            camera: CameraModel::default_wheelchair(),
            local: PlannerParams::new(local, seed),
            global: PlannerParams::new(Algorithm::Prm, seed),
            noise,
            seed,
            fov_only: false,
            goal_tolerance: 0.2,
            max_legs: 200,
            step: COLLISION_STEP,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Success,
    Collision,
    GoalUnreachable,
    NoPath,
    FrameGap,
    LegLimit,
}

impl Outcome {
    pub fn as_str(self) -> &'static str {
        match self {
            Outcome::Success => "success",
            Outcome::Collision => "collision",
            Outcome::GoalUnreachable => "goal_unreachable",
            Outcome::NoPath => "no_path",
            Outcome::FrameGap => "frame_gap",
            Outcome::LegLimit => "leg_limit",
        }
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LegRecord {
    pub goal_index: usize,
    /// Distance between the sensed costmap and the ground-truth crop.
    pub d: f64,
    pub tc: f64,
    pub collisions: usize,
    pub reached: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NavigationReport {
    pub outcome: Outcome,
    pub legs: Vec<LegRecord>,
    pub collisions: usize,
    pub path_length: f64,
    pub seed: u64,
    pub noise: f64,
    pub goals: Vec<Pose2D>,
    pub trajectory: Vec<Pose2D>,
}

impl NavigationReport {
    pub fn mean_d(&self) -> f64 {
        mean(self.legs.iter().map(|l| l.d))
    }

    pub fn mean_tc(&self) -> f64 {
        mean(self.legs.iter().map(|l| l.tc))
    }

    pub fn is_success(&self) -> bool {
        self.outcome == Outcome::Success
    }

    /// `key: value` lines.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "outcome: {}", self.outcome);
        let _ = writeln!(s, "legs: {}", self.legs.len());
        let _ = writeln!(s, "collisions: {}", self.collisions);
        let _ = writeln!(s, "path_length_m: {:.6}", self.path_length);
        let _ = writeln!(s, "mean_D: {:.6}", self.mean_d());
        let _ = writeln!(s, "mean_TC: {:.6}", self.mean_tc());
        let _ = writeln!(s, "seed: {}", self.seed);
        s
    }

    pub fn trajectory_csv(&self, comments: &[String]) -> String {
        let mut s = String::new();
        for c in comments {
            let _ = writeln!(s, "# {c}");
        }
        s.push_str("x_m,y_m,theta_rad\n");
        for p in &self.trajectory {
            let _ = writeln!(s, "{},{},{}", p.x, p.y, p.theta);
        }
        s
    }
}

fn mean(it: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = it.collect();
    if v.is_empty() {
        0.0
    } else {
        crate::geometry::compensated_sum(v.iter().copied()) / v.len() as f64
    }
}

/// A sensed local costmap and the noise-free map of the same view.
#[derive(Clone, Debug)]
pub struct Sensed {
    pub map: Costmap,
    pub truth: Costmap,
    pub distance: f64,
    raw: Costmap,
}

fn in_view(world: &WorldMap, pose: &Pose2D, cam: &CameraModel, p: Point2) -> bool {
    let d = p.dist(pose.position());
    if d > cam.max_range {
        return false;
    }
    let bearing = (p.y - pose.y).atan2(p.x - pose.x);
    if d > 0.0 && normalize_angle(bearing - pose.theta).abs() > cam.horizontal_fov / 2.0 {
        return false;
    }
    world.line_of_sight(pose.position(), p, true)
}

/// The robot-centric costmap seen from `pose`: cells in view (and under the
/// robot's own footprint) take their ground-truth state, view cells flip
/// between Free and Occupied with probability `noise`, the rest stay
/// Unknown; then the usual constriction and inflation.
pub fn sense(world: &WorldMap, pose: &Pose2D, cam: &CameraModel, noise: f64, seed: u64) -> Result<Sensed> {
    if !(0.0..=1.0).contains(&noise) {
        return Err(Error::contract("sensing noise must lie in [0, 1]"));
    }
    let fp = world.footprint();
    let geom = GridGeometry::local_default();
    let mut raw_truth = Costmap::new(geom, CellState::Unknown)?;
    let mut raw = raw_truth.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let half_x = fp.length / 2.0 + fp.constriction_radius;
    let half_y = fp.width / 2.0 + fp.constriction_radius;
    for r in 0..geom.height {
        for c in 0..geom.width {
            let flip = rng.random::<f64>() < noise;
            let local = raw.cell_center((r, c));
            let wp = pose.transform_point(local);
            let Some(state) = world.grid().state_at(wp) else { continue };
            let near = local.x.abs() <= half_x && local.y.abs() <= half_y;
            if !near && !in_view(world, pose, cam, wp) {
                continue;
            }
            raw_truth.set((r, c), state);
            let noisy = match state {
                CellState::Free if flip && !near => CellState::Occupied,
                CellState::Occupied if flip && !near => CellState::Free,
                s => s,
            };
            raw.set((r, c), noisy);
        }
    }
    let morph = |m: &Costmap| inflate_occupied(&constrict_free(m, fp.constriction_radius), fp.inflation_radius);
    let map = morph(&raw);
    let truth = morph(&raw_truth);
    let distance = costmap_distance(&map, &truth)?;
    Ok(Sensed { map, truth, distance, raw })
}

/// When the robot's own cell is not Free, frees nearby cells that keep a
/// smaller clearance so the robot can leave a spot where the full inflation
/// has caught up with it.
fn with_escape(sensed: &Sensed, robot_cell: (usize, usize)) -> Costmap {
    let mut out = sensed.map.clone();
    if out.is_free(robot_cell) {
        return out;
    }
    let tight = inflate_occupied(&constrict_free(&sensed.raw, ESCAPE_CLEARANCE), ESCAPE_CLEARANCE);
    for (dr, dc) in disc_offsets(ESCAPE_RADIUS, out.resolution()) {
        let (r, c) = (robot_cell.0 as i64 + dr, robot_cell.1 as i64 + dc);
        if tight.get_signed(r, c) == Some(CellState::Free) {
            out.set((r as usize, c as usize), CellState::Free);
        }
    }
    out
}

struct Walk {
    end: Pose2D,
    reached: bool,
    collisions: usize,
}

/// Moves the robot along `pts` in `step` increments, stopping within
/// `tol` of `goal`, and counts entries into non-Free world cells.
fn walk(world: &WorldMap, from: Pose2D, pts: &[Point2], goal: Point2, tol: f64, step: f64, traj: &mut Vec<Pose2D>) -> Walk {
    let free = |p: Point2| world.grid().state_at(p) == Some(CellState::Free);
    let mut pos = from.position();
    let mut heading = from.theta;
    let mut inside = !free(pos);
    let mut collisions = 0;
    for &next in pts {
        let d = next - pos;
        let len = d.norm();
        if len == 0.0 {
            continue;
        }
        heading = d.y.atan2(d.x);
        let n = (len / step).ceil().max(1.0) as usize;
        let a = pos;
        for k in 1..=n {
            pos = a.lerp(next, k as f64 / n as f64);
            let blocked = !free(pos);
            if blocked && !inside {
                collisions += 1;
            }
            inside = blocked;
            traj.push(Pose2D::new(pos.x, pos.y, heading));
            if pos.dist(goal) <= tol {
                return Walk {
                    end: Pose2D::new(pos.x, pos.y, heading),
                    reached: true,
                    collisions,
                };
            }
        }
    }
    Walk {
        end: Pose2D::new(pos.x, pos.y, heading),
        reached: pos.dist(goal) <= tol,
        collisions,
    }
}

fn goals_for(path: &WorldPath, cfg: &NavConfig, world: &WorldMap) -> Result<(Pose2D, GoalArray)> {
    match generate_intermediate_goals(path, &cfg.camera, world, cfg.fov_only) {
        Err(Error::FrameGap { index: 1 }) => {
            // turn in place toward the first waypoint and retry
            let p = path.poses();
            let d = p[1].position() - p[0].position();
            let start = Pose2D::new(p[0].x, p[0].y, d.y.atan2(d.x));
            let mut poses = p.to_vec();
            poses[0] = start;
            let turned = WorldPath::new(poses)?;
            Ok((start, generate_intermediate_goals(&turned, &cfg.camera, world, cfg.fov_only)?))
        }
        other => Ok((path.start(), other?)),
    }
}

/// Global plan, intermediate goals, then sense/plan/move legs until the goal
/// is reached or the run fails. Deterministic in `cfg.seed`.
pub fn simulate_navigation(world: &WorldMap, start: &Pose2D, goal: &Pose2D, cfg: &NavConfig) -> NavigationReport {
    let mut report = NavigationReport {
        outcome: Outcome::NoPath,
        legs: Vec::new(),
        collisions: 0,
        path_length: 0.0,
        seed: cfg.seed,
        noise: cfg.noise,
        goals: Vec::new(),
        trajectory: vec![*start],
    };
    let mut global = cfg.global;
    global.seed = mix_seed(cfg.seed, u64::MAX);
    let path = match plan_global(world, start, goal, &global) {
        Ok(p) => p,
        Err(_) => return report,
    };
    let (mut robot, goals) = match goals_for(&path, cfg, world) {
        Ok(v) => v,
        Err(Error::FrameGap { .. }) => {
            report.outcome = Outcome::FrameGap;
            return report;
        }
        Err(_) => return report,
    };
    report.goals = goals.goals.clone();
    report.trajectory[0] = robot;

    let robot_cell = Costmap::new(GridGeometry::local_default(), CellState::Unknown)
        .expect("local grid")
        .cell_of(Point2::new(0.0, 0.0))
        .expect("robot on local grid");
    let mut failure = None;
    let mut k = 0;
    let mut attempts = 0;
    while k < goals.goals.len() {
        let g = goals.goals[k];
        let last = k + 1 == goals.goals.len();
        if robot.dist(&g) <= cfg.goal_tolerance {
            robot.theta = g.theta;
            k += 1;
            attempts = 0;
            continue;
        }
        if report.legs.len() >= cfg.max_legs || attempts >= MAX_ATTEMPTS_PER_GOAL {
            failure = Some(Outcome::LegLimit);
            break;
        }
        attempts += 1;
        let leg = report.legs.len() as u64;
        let sensed = match sense(world, &robot, &cfg.camera, cfg.noise, mix_seed(cfg.seed, 2 * leg)) {
            Ok(s) => s,
            Err(_) => {
                failure = Some(Outcome::NoPath);
                break;
            }
        };
        let planning = with_escape(&sensed, robot_cell);
        let mut local = cfg.local;
        local.seed = mix_seed(cfg.seed, 2 * leg + 1);
        let plan = match plan_to_goal(&planning, &Pose2D::default(), &robot.relative(&g), &local) {
            Ok(p) => p,
            Err(_) => {
                report.legs.push(LegRecord {
                    goal_index: k,
                    d: sensed.distance,
                    tc: 0.0,
                    collisions: 0,
                    reached: false,
                });
                if attempts >= MAX_ATTEMPTS_PER_GOAL {
                    failure = Some(Outcome::NoPath);
                    break;
                }
                continue;
            }
        };
        let pts: Vec<Point2> = plan.path.positions().iter().map(|&p| robot.transform_point(p)).collect();
        let w = walk(world, robot, &pts, g.position(), cfg.goal_tolerance, cfg.step, &mut report.trajectory);
        report.collisions += w.collisions;
        report.legs.push(LegRecord {
            goal_index: k,
            d: sensed.distance,
            tc: turning_cost(&plan.path),
            collisions: w.collisions,
            reached: w.reached,
        });
        let moved = w.end.dist(&robot);
        robot = Pose2D::new(w.end.x, w.end.y, g.theta);
        if w.reached {
            k += 1;
            attempts = 0;
        } else if moved < MIN_PROGRESS {
            if last {
                failure = Some(Outcome::GoalUnreachable);
                break;
            }
            k += 1;
            attempts = 0;
        }
    }
    report.path_length = crate::geometry::compensated_sum(report.trajectory.windows(2).map(|w| w[0].dist(&w[1])));
    report.outcome = if report.collisions > 0 {
        Outcome::Collision
    } else if let Some(f) = failure {
        f
    } else if robot.dist(goal) <= cfg.goal_tolerance {
        Outcome::Success
    } else {
        Outcome::GoalUnreachable
    };
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::navigation::{corridor_world, open_world};

    #[test]
    fn noise_free_sensing_matches_truth() {
        let s = corridor_world(2);
        let cam = CameraModel::default_wheelchair();
        let sensed = sense(&s.world, &s.start, &cam, 0.0, 1).unwrap();
        assert_eq!(sensed.distance, 0.0);
        assert!(sensed.map.is_free_point(Point2::new(0.0, 0.0)));
        let noisy = sense(&s.world, &s.start, &cam, 0.1, 1).unwrap();
        assert!(noisy.distance > 0.0);
        assert_eq!(noisy.truth, sensed.truth);
    }

    #[test]
    fn open_world_run_succeeds() {
        let s = open_world(22.0);
        let cfg = NavConfig::new(Algorithm::Astar, 0.0, 4);
        let r = simulate_navigation(&s.world, &s.start, &s.goal, &cfg);
        assert_eq!(r.outcome, Outcome::Success, "{}", r.to_text());
        assert_eq!(r.collisions, 0);
        assert!(r.legs.iter().all(|l| l.d == 0.0));
        assert_eq!(*r.goals.last().unwrap(), s.goal);
    }

    #[test]
    fn goal_in_wall_is_unreachable() {
        let s = corridor_world(5);
        let goal = Pose2D::new(15.0, 2.5, 0.0);
        let cfg = NavConfig::new(Algorithm::Astar, 0.0, 1);
        let r = simulate_navigation(&s.world, &s.start, &goal, &cfg);
        assert_eq!(r.outcome, Outcome::GoalUnreachable, "{}", r.to_text());
        assert_eq!(r.collisions, 0);
    }

    #[test]
    fn runs_are_deterministic() {
        let s = corridor_world(8);
        let cfg = NavConfig::new(Algorithm::Jps, 0.05, 8);
        let a = simulate_navigation(&s.world, &s.start, &s.goal, &cfg);
        let b = simulate_navigation(&s.world, &s.start, &s.goal, &cfg);
        assert_eq!(a, b);
    }
}
