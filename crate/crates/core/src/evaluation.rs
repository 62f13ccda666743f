//! Success rate, turning cost, costmap-quality binning and result tables.

use std::fmt::{self, Write as _};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::costmap::{costmap_distance, Costmap};
use crate::error::{Error, Result};
use crate::geometry::{compensated_sum, normalize_angle, Point2, Pose2D};
use crate::navigation::{NavigationReport, Outcome};
use crate::planners::{collision_check, plan_to_goal, Algorithm, PlannedPath, PlannerParams, COLLISION_STEP, TOTAL_NODES};

pub const SUCCESS_TOLERANCE: f64 = 0.2;
pub const DEFAULT_BINS: usize = 6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureReason {
    Collision,
    GoalMissed,
    NoPath,
}

impl FailureReason {
    pub fn as_str(self) -> &'static str {
        match self {
            FailureReason::Collision => "collision",
            FailureReason::GoalMissed => "goal_missed",
            FailureReason::NoPath => "no_path",
        }
    }
}

impl fmt::Display for FailureReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Success iff every segment between consecutive nodes is collision free on
/// `gt` and the last node is within `tol` of the goal position.
pub fn check_success(path: &PlannedPath, gt: &Costmap, goal: &Pose2D, tol: f64) -> (bool, Option<FailureReason>) {
    let pts = path.positions();
    if !pts.windows(2).all(|w| collision_check(gt, w[0], w[1], COLLISION_STEP)) {
        return (false, Some(FailureReason::Collision));
    }
    if pts[pts.len() - 1].dist(goal.position()) > tol {
        return (false, Some(FailureReason::GoalMissed));
    }
    (true, None)
}

/// Turning cost with the robot initially heading along `initial_heading`:
/// the absolute heading changes from the initial heading through every
/// nonzero segment to `goal_theta`, summed and divided by 25 right angles.
pub fn turning_cost_points(points: &[Point2], initial_heading: f64, goal_theta: f64) -> Result<f64> {
    if points.len() != TOTAL_NODES {
        return Err(Error::contract(format!(
            "turning cost needs {TOTAL_NODES} nodes, got {}",
            points.len()
        )));
    }
    let mut headings = vec![initial_heading];
    for w in points.windows(2) {
        let d = w[1] - w[0];
        if d.norm() > 0.0 {
            headings.push(d.y.atan2(d.x));
        }
    }
    headings.push(goal_theta);
    let total = compensated_sum(headings.windows(2).map(|h| normalize_angle(h[1] - h[0]).abs()));
    Ok(total / (TOTAL_NODES as f64 * std::f64::consts::FRAC_PI_2))
}

/// Turning cost of a path in the projected body frame (initial heading +x).
pub fn turning_cost(path: &PlannedPath) -> f64 {
    turning_cost_points(&path.positions(), 0.0, path.goal().theta).expect("planned paths have 25 nodes")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub sample_id: String,
    pub planner: String,
    pub success: bool,
    pub tc: f64,
    /// Costmap distance of the input map, in [0, 1].
    pub d: f64,
    pub reason: Option<FailureReason>,
}

impl EvalRecord {
    pub fn from_navigation(id: impl Into<String>, planner: Algorithm, report: &NavigationReport) -> Self {
        let reason = match report.outcome {
            Outcome::Success => None,
            Outcome::Collision => Some(FailureReason::Collision),
            Outcome::NoPath | Outcome::FrameGap => Some(FailureReason::NoPath),
            Outcome::GoalUnreachable | Outcome::LegLimit => Some(FailureReason::GoalMissed),
        };
        Self {
            sample_id: id.into(),
            planner: planner.name().into(),
            success: reason.is_none(),
            tc: report.mean_tc(),
            d: report.mean_d(),
            reason,
        }
    }
}

/// One evaluation input: a perceived map to plan on, the ground truth to
/// judge with and the goal.
#[derive(Clone, Debug)]
pub struct EvalSample {
    pub id: String,
    pub perceived: Arc<Costmap>,
    pub ground_truth: Option<Arc<Costmap>>,
    pub goal: Pose2D,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SuiteRow {
    pub planner: String,
    pub n: usize,
    pub successes: usize,
    pub mean_tc: Option<f64>,
}

impl SuiteRow {
    pub fn sr_percent(&self) -> Option<f64> {
        (self.n > 0).then(|| 100.0 * self.successes as f64 / self.n as f64)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SuiteResult {
    pub rows: Vec<SuiteRow>,
    pub records: Vec<EvalRecord>,
    /// Samples without ground truth.
    pub skipped: usize,
}

fn opt(v: Option<f64>, digits: usize, empty: &str) -> String {
    v.map_or_else(|| empty.to_string(), |x| format!("{x:.digits$}"))
}

impl SuiteResult {
    pub fn to_text(&self) -> String {
        let mut s = format!("{:<10} {:>6} {:>10} {:>9}\n", "planner", "n", "SR_percent", "mean_TC");
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{:<10} {:>6} {:>10} {:>9}",
                r.planner,
                r.n,
                opt(r.sr_percent(), 1, "-"),
                opt(r.mean_tc, 3, "-")
            );
        }
        s
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("planner,n,SR_percent,mean_TC\n");
        for r in &self.rows {
            let _ = writeln!(s, "{},{},{},{}", r.planner, r.n, opt(r.sr_percent(), 4, ""), opt(r.mean_tc, 6, ""));
        }
        s
    }
}

/// Aggregates records per planner, in the order given.
pub fn summarize(records: &[EvalRecord], planners: &[String]) -> Vec<SuiteRow> {
    planners
        .iter()
        .map(|p| {
            let mine: Vec<&EvalRecord> = records.iter().filter(|r| &r.planner == p).collect();
            let ok: Vec<f64> = mine.iter().filter(|r| r.success).map(|r| r.tc).collect();
            SuiteRow {
                planner: p.clone(),
                n: mine.len(),
                successes: ok.len(),
                mean_tc: (!ok.is_empty()).then(|| compensated_sum(ok.iter().copied()) / ok.len() as f64),
            }
        })
        .collect()
}

fn evaluate_one(s: &EvalSample, gt: &Costmap, algo: Algorithm, base: &PlannerParams) -> EvalRecord {
    let d = costmap_distance(&s.perceived, gt).unwrap_or(1.0);
    let mut params = *base;
    params.algorithm = algo;
    let (success, tc, reason) = match plan_to_goal(&s.perceived, &Pose2D::default(), &s.goal, &params) {
        Ok(plan) => {
            let (ok, why) = check_success(&plan.path, gt, &s.goal, SUCCESS_TOLERANCE);
            (ok, turning_cost(&plan.path), why)
        }
        Err(_) => (false, 0.0, Some(FailureReason::NoPath)),
    };
    EvalRecord {
        sample_id: s.id.clone(),
        planner: algo.name().into(),
        success,
        tc,
        d,
        reason,
    }
}

/// Plans every sample with every planner from the robot origin, judges the
/// result on the ground truth and tabulates SR and mean TC per planner.
pub fn evaluate_suite(samples: &[EvalSample], planners: &[Algorithm], base: &PlannerParams) -> SuiteResult {
    let usable: Vec<(&EvalSample, &Costmap)> = samples
        .iter()
        .filter_map(|s| s.ground_truth.as_deref().map(|g| (s, g)))
        .collect();
    let skipped = samples.len() - usable.len();
    if skipped > 0 {
        log::warn!("{skipped} samples have no ground-truth costmap and were skipped");
    }
    let jobs: Vec<(Algorithm, usize)> = planners
        .iter()
        .flat_map(|&a| (0..usable.len()).map(move |i| (a, i)))
        .collect();
    let records: Vec<EvalRecord> = jobs
        .par_iter()
        .map(|&(a, i)| evaluate_one(usable[i].0, usable[i].1, a, base))
        .collect();
    let names: Vec<String> = planners.iter().map(|a| a.name().to_string()).collect();
    SuiteResult {
        rows: summarize(&records, &names),
        records,
        skipped,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct QualityBin {
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
    pub successes: usize,
}

impl QualityBin {
    pub fn sr(&self) -> Option<f64> {
        (self.n > 0).then(|| self.successes as f64 / self.n as f64)
    }

    pub fn center(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }
}

/// Equal-width bins over the observed range of D.
pub fn bin_by_quality(records: &[EvalRecord], bins: usize) -> Result<Vec<QualityBin>> {
    if bins < 2 {
        return Err(Error::contract("need at least two bins"));
    }
    if records.iter().any(|r| !r.d.is_finite()) {
        return Err(Error::contract("every record needs a finite D"));
    }
    let lo = records.iter().map(|r| r.d).fold(f64::INFINITY, f64::min);
    let hi = records.iter().map(|r| r.d).fold(f64::NEG_INFINITY, f64::max);
    let (lo, hi) = if records.is_empty() { (0.0, 0.0) } else { (lo, hi) };
    let width = (hi - lo) / bins as f64;
    let mut out: Vec<QualityBin> = (0..bins)
        .map(|i| QualityBin {
            lo: lo + (hi - lo) * i as f64 / bins as f64,
            hi: lo + (hi - lo) * (i + 1) as f64 / bins as f64,
            n: 0,
            successes: 0,
        })
        .collect();
    for r in records {
        let i = if width > 0.0 {
            (((r.d - lo) / width).floor() as usize).min(bins - 1)
        } else {
            0
        };
        out[i].n += 1;
        out[i].successes += r.success as usize;
    }
    Ok(out)
}

/// Count-weighted least-squares slope of SR against bin center, over the
/// populated bins. `None` with fewer than two distinct populated bins.
pub fn trend_slope(bins: &[QualityBin]) -> Option<f64> {
    let pts: Vec<(f64, f64, f64)> = bins
        .iter()
        .filter_map(|b| b.sr().map(|sr| (b.center(), sr, b.n as f64)))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let w: f64 = compensated_sum(pts.iter().map(|p| p.2));
    let mx = compensated_sum(pts.iter().map(|p| p.2 * p.0)) / w;
    let my = compensated_sum(pts.iter().map(|p| p.2 * p.1)) / w;
    let sxx = compensated_sum(pts.iter().map(|p| p.2 * (p.0 - mx).powi(2)));
    let sxy = compensated_sum(pts.iter().map(|p| p.2 * (p.0 - mx) * (p.1 - my)));
    (sxx > 0.0).then(|| sxy / sxx)
}

pub fn bins_to_text(bins: &[QualityBin]) -> String {
    let mut s = format!("{:>8} {:>8} {:>6} {:>10}\n", "D_lo", "D_hi", "n", "SR_percent");
    for b in bins {
        let _ = writeln!(
            s,
            "{:>8.4} {:>8.4} {:>6} {:>10}",
            b.lo,
            b.hi,
            b.n,
            opt(b.sr().map(|v| 100.0 * v), 1, "empty")
        );
    }
    s
}
