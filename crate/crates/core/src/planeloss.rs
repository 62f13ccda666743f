//! Best-fit regression plane in (pixel, disparity) space and the training
//! losses evaluated on top of it.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{NeumaierSum, Point2};
use crate::labels::BinaryMask;
use crate::planners::PlannedPath;
use crate::scene::{CameraModel, DepthImage};

/// Depths closer than this are excluded from plane fits.
pub const MIN_DEPTH: f64 = 0.1;
pub const BCE_EPS: f64 = 1e-7;

const PHI_LIMIT_DEG: f64 = 45.0;
const GRID_STEP_DEG: f64 = 0.5;
const REFINE_TOL_RAD: f64 = 1e-11;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlaneSample {
    pub u: f64,
    pub v: f64,
    pub disparity: f64,
}

impl PlaneSample {
    pub fn new(u: f64, v: f64, disparity: f64) -> Self {
        Self { u, v, disparity }
    }
}

/// Disparity model `a0 + a1 * (-u sin(phi) + v cos(phi))`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlaneFit {
    pub a0: f64,
    pub a1: f64,
    /// Camera roll, radians, within [-pi/4, pi/4].
    pub phi: f64,
    pub mean_sq_residual: f64,
    pub sample_count: usize,
}

impl PlaneFit {
    pub fn predict(&self, u: f64, v: f64) -> f64 {
        let (s, c) = self.phi.sin_cos();
        self.a0 + self.a1 * (-u * s + v * c)
    }
}

/// Centered second moments of the samples.
struct Moments {
    n: f64,
    mean_u: f64,
    mean_v: f64,
    mean_d: f64,
    suu: f64,
    svv: f64,
    suv: f64,
    sud: f64,
    svd: f64,
    sdd: f64,
}

impl Moments {
    fn new(samples: &[PlaneSample]) -> Self {
        let n = samples.len() as f64;
        let mean = |f: fn(&PlaneSample) -> f64| samples.iter().map(f).collect::<NeumaierSum>().sum() / n;
        let (mu, mv, md) = (mean(|s| s.u), mean(|s| s.v), mean(|s| s.disparity));
        let mut acc = [NeumaierSum::default(); 6];
        for s in samples {
            let (u, v, d) = (s.u - mu, s.v - mv, s.disparity - md);
            for (a, x) in acc.iter_mut().zip([u * u, v * v, u * v, u * d, v * d, d * d]) {
                a.add(x);
            }
        }
        let [suu, svv, suv, sud, svd, sdd] = acc.map(|a| a.sum());
        Self {
            n,
            mean_u: mu,
            mean_v: mv,
            mean_d: md,
            suu,
            svv,
            suv,
            sud,
            svd,
            sdd,
        }
    }

    /// (S_tt, S_td) for the rotated coordinate at roll `phi`.
    fn projected(&self, phi: f64) -> (f64, f64) {
        let (s, c) = phi.sin_cos();
        let stt = s * s * self.suu - 2.0 * s * c * self.suv + c * c * self.svv;
        let std = -s * self.sud + c * self.svd;
        (stt, std)
    }

    fn scale(&self) -> f64 {
        self.suu + self.svv
    }

    fn is_rank_deficient(&self, stt: f64) -> bool {
        stt <= 1e-12 * self.scale().max(f64::MIN_POSITIVE)
    }

    /// Residual sum of squares of the best linear fit at roll `phi`.
    fn rss(&self, phi: f64) -> f64 {
        let (stt, std) = self.projected(phi);
        if self.is_rank_deficient(stt) {
            self.sdd
        } else {
            (self.sdd - std * std / stt).max(0.0)
        }
    }
}

fn golden_section(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = b - inv_phi * (b - a);
    let mut x2 = a + inv_phi * (b - a);
    let (mut f1, mut f2) = (f(x1), f(x2));
    while b - a > tol {
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - inv_phi * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + inv_phi * (b - a);
            f2 = f(x2);
        }
    }
    if f1 <= f2 {
        x1
    } else {
        x2
    }
}

/// Least-squares fit of the roll-parameterized disparity plane.
///
/// The roll is located by a 0.5 degree scan over [-45, 45] degrees followed by
/// golden-section refinement; the linear coefficients are solved in closed
/// form for each candidate roll.
pub fn fit_plane(samples: &[PlaneSample]) -> Result<PlaneFit> {
    if samples.len() < 3 {
        return Err(Error::InsufficientSamples { found: samples.len() });
    }
    if let Some(bad) = samples
        .iter()
        .find(|s| !(s.disparity.is_finite() && s.disparity > 0.0 && s.u.is_finite() && s.v.is_finite()))
    {
        return Err(Error::contract(format!("invalid plane sample {bad:?}")));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| {
        a.u.total_cmp(&b.u)
            .then(a.v.total_cmp(&b.v))
            .then(a.disparity.total_cmp(&b.disparity))
    });
    let m = Moments::new(&sorted);

    let steps = (PHI_LIMIT_DEG / GRID_STEP_DEG).round() as i64;
    let tie_tol = 1e-13 * m.sdd.abs();
    let mut best_phi = 0.0;
    let mut best = m.rss(0.0);
    // Visit candidates by increasing |phi| so exact ties keep the smaller roll.
    for k in 1..=steps {
        for sign in [1.0, -1.0] {
            let phi = (sign * k as f64 * GRID_STEP_DEG).to_radians();
            let r = m.rss(phi);
            if r < best - tie_tol {
                best = r;
                best_phi = phi;
            }
        }
    }
    let limit = PHI_LIMIT_DEG.to_radians();
    let half = GRID_STEP_DEG.to_radians();
    let lo = (best_phi - half).max(-limit);
    let hi = (best_phi + half).min(limit);
    let refined = golden_section(|p| m.rss(p), lo, hi, REFINE_TOL_RAD);
    let phi = if m.rss(refined) < best - tie_tol { refined } else { best_phi };

    let (stt, std) = m.projected(phi);
    let degenerate = m.is_rank_deficient(stt);
    let a1 = if degenerate { 0.0 } else { std / stt };
    let (s, c) = phi.sin_cos();
    let a0 = m.mean_d - a1 * (-m.mean_u * s + m.mean_v * c);
    let mut fit = PlaneFit {
        a0,
        a1,
        phi,
        mean_sq_residual: 0.0,
        sample_count: sorted.len(),
    };
    let rss: NeumaierSum = sorted
        .iter()
        .map(|p| {
            let e = p.disparity - fit.predict(p.u, p.v);
            e * e
        })
        .collect();
    fit.mean_sq_residual = rss.sum() / m.n;
    if degenerate {
        return Err(Error::DegenerateFit(fit));
    }
    Ok(fit)
}

/// Plane-fit samples from mask pixels above 0.5 with valid depth.
pub fn mask_samples(mask: &BinaryMask, depth: &DepthImage) -> Result<Vec<PlaneSample>> {
    if mask.width() != depth.width() || mask.height() != depth.height() {
        return Err(Error::contract("mask and depth dimensions differ"));
    }
    let mut out = Vec::new();
    for v in 0..mask.height() {
        for u in 0..mask.width() {
            let d = depth.get(u, v);
            if mask.get(u, v) > 0.5 && d >= MIN_DEPTH {
                out.push(PlaneSample::new(u as f64, v as f64, 1.0 / d));
            }
        }
    }
    Ok(out)
}

/// Fit over a mask; a rank-deficient optimum yields its fallback fit.
pub fn fit_mask_plane(mask: &BinaryMask, depth: &DepthImage) -> Result<PlaneFit> {
    accept_degenerate(fit_plane(&mask_samples(mask, depth)?))
}

fn accept_degenerate(r: Result<PlaneFit>) -> Result<PlaneFit> {
    match r {
        Err(Error::DegenerateFit(fit)) => Ok(fit),
        other => other,
    }
}

/// Mean squared residual of the best-fit plane over the mask pixels.
pub fn loss_er(mask: &BinaryMask, depth: &DepthImage) -> Result<f64> {
    fit_mask_plane(mask, depth).map(|f| f.mean_sq_residual)
}

/// Plane-fit samples at the pixels of the path nodes that land in the image
/// on valid depth.
pub fn path_samples(path: &PlannedPath, depth: &DepthImage, cam: &CameraModel) -> Result<Vec<PlaneSample>> {
    if depth.width() != cam.width || depth.height() != cam.height {
        return Err(Error::contract("depth image does not match the camera"));
    }
    let mut out = Vec::new();
    for p in path.positions() {
        let pc = cam.body_to_camera([p.x, p.y, 0.0]);
        let Some((u, v)) = cam.project(pc) else { continue };
        let (u, v) = (u.round(), v.round());
        if u < 0.0 || v < 0.0 || u >= cam.width as f64 || v >= cam.height as f64 {
            continue;
        }
        let d = depth.get(u as usize, v as usize);
        if d >= MIN_DEPTH {
            out.push(PlaneSample::new(u, v, 1.0 / d));
        }
    }
    Ok(out)
}

pub fn fit_path_plane(path: &PlannedPath, depth: &DepthImage, cam: &CameraModel) -> Result<PlaneFit> {
    accept_degenerate(fit_plane(&path_samples(path, depth, cam)?))
}

/// Plane-fit residual of the path nodes read through the depth image.
pub fn loss_ir(path: &PlannedPath, depth: &DepthImage, cam: &CameraModel) -> Result<f64> {
    fit_path_plane(path, depth, cam).map(|f| f.mean_sq_residual)
}

/// Mean node-wise Euclidean distance between two paths, meters.
pub fn loss_ip(pred: &PlannedPath, label: &PlannedPath) -> Result<f64> {
    let (a, b) = (pred.positions(), label.positions());
    if a.len() != b.len() {
        return Err(Error::contract("paths have different node counts"));
    }
    Ok(loss_ip_points(&a, &b))
}

pub(crate) fn loss_ip_points(a: &[Point2], b: &[Point2]) -> f64 {
    a.iter().zip(b).map(|(p, q)| p.dist(*q)).collect::<NeumaierSum>().sum() / a.len() as f64
}

/// Mean pixel-wise binary cross entropy with predictions clamped to
/// `[BCE_EPS, 1 - BCE_EPS]`.
pub fn loss_ep(pred: &BinaryMask, label: &BinaryMask) -> Result<f64> {
    if pred.width() != label.width() || pred.height() != label.height() {
        return Err(Error::contract("prediction and label masks differ in size"));
    }
    let n = pred.data().len();
    if n == 0 {
        return Ok(0.0);
    }
    let sum: NeumaierSum = pred
        .data()
        .iter()
        .zip(label.data())
        .map(|(&p, &y)| {
            let p = p.clamp(BCE_EPS, 1.0 - BCE_EPS);
            -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
        })
        .collect();
    Ok(sum.sum() / n as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub lambda_er: f64,
    pub lambda_ir: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            lambda_er: 0.10,
            lambda_ir: 0.15,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CombinedLosses {
    pub l_e: f64,
    pub l_i: f64,
    /// The plane residual term could not be evaluated and counted as zero.
    pub er_degenerate: bool,
    pub ir_degenerate: bool,
}

/// Weighted sums `L_E = L_EP + lambda_er * L_ER` and
/// `L_I = L_IP + lambda_ir * L_IR`. A residual term that failed for lack of
/// samples contributes zero and is flagged.
pub fn combined_losses(
    l_ep: f64,
    l_er: Result<f64>,
    l_ip: f64,
    l_ir: Result<f64>,
    weights: &LossWeights,
) -> Result<CombinedLosses> {
    if weights.lambda_er < 0.0 || weights.lambda_ir < 0.0 {
        return Err(Error::contract("loss weights must be non-negative"));
    }
    let soften = |r: Result<f64>| match r {
        Ok(v) => Ok((v, false)),
        Err(Error::InsufficientSamples { .. }) => Ok((0.0, true)),
        Err(e) => Err(e),
    };
    let (er, er_degenerate) = soften(l_er)?;
    let (ir, ir_degenerate) = soften(l_ir)?;
    Ok(CombinedLosses {
        l_e: l_ep + weights.lambda_er * er,
        l_i: l_ip + weights.lambda_ir * ir,
        er_degenerate,
        ir_degenerate,
    })
}
