use proptest::prelude::*;

use wheelplan::geometry::{Point2, Pose2D};
use wheelplan::labels::BinaryMask;
use wheelplan::planeloss::{fit_plane, loss_ep, loss_ip, PlaneSample};
use wheelplan::planners::{PlannedPath, PATH_NODES};

fn samples(a0: f64, a1: f64, phi: f64, pix: &[(u16, u16)]) -> Vec<PlaneSample> {
    let (s, c) = phi.sin_cos();
    pix.iter()
        .map(|&(u, v)| {
            let (u, v) = (u as f64, v as f64);
            PlaneSample::new(u, v, a0 + a1 * (v * c - u * s))
        })
        .collect()
}

/// Only pixels that see the plane in front of the camera carry a sample.
fn visible(s: Vec<PlaneSample>) -> Vec<PlaneSample> {
    s.into_iter().filter(|p| p.disparity > 0.0).collect()
}

/// Mean squared residual of the best `(a0, a1)` for a fixed roll, by direct
/// least squares on the projected coordinate.
fn residual_at(s: &[PlaneSample], phi: f64) -> f64 {
    let (sn, cs) = phi.sin_cos();
    let n = s.len() as f64;
    let t: Vec<f64> = s.iter().map(|p| p.v * cs - p.u * sn).collect();
    let mt = t.iter().sum::<f64>() / n;
    let md = s.iter().map(|p| p.disparity).sum::<f64>() / n;
    let stt: f64 = t.iter().map(|x| (x - mt) * (x - mt)).sum();
    let std: f64 = t.iter().zip(s).map(|(x, p)| (x - mt) * (p.disparity - md)).sum();
    let a1 = if stt > 0.0 { std / stt } else { 0.0 };
    let a0 = md - a1 * mt;
    t.iter()
        .zip(s)
        .map(|(x, p)| (p.disparity - a0 - a1 * x).powi(2))
        .sum::<f64>()
        / n
}

fn path(pts: &[(f64, f64)]) -> PlannedPath {
    let nodes: Vec<Point2> = pts[..PATH_NODES].iter().map(|&(x, y)| Point2::new(x, y)).collect();
    let (gx, gy) = pts[PATH_NODES];
    PlannedPath::new(nodes, Pose2D::new(gx, gy, 0.0)).unwrap()
}

fn arb_path() -> impl Strategy<Value = PlannedPath> {
    prop::collection::vec((-5.0f64..5.0, -5.0f64..5.0), PATH_NODES + 1).prop_map(|v| path(&v))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn fit_is_order_invariant(
        pix in prop::collection::vec((0u16..320, 112u16..224), 12..60),
        noise in prop::collection::vec(-0.01f64..0.01, 60),
        phi in -0.4f64..0.4,
        rot in 0usize..60,
    ) {
        let mut s = samples(0.2, 0.004, phi, &pix);
        for (p, e) in s.iter_mut().zip(&noise) {
            p.disparity += e;
        }
        let a = fit_plane(&s);
        let mut shuffled = s.clone();
        shuffled.rotate_left(rot % s.len());
        shuffled.reverse();
        let b = fit_plane(&shuffled);
        match (a, b) {
            (Ok(a), Ok(b)) => prop_assert_eq!(a, b),
            (a, b) => prop_assert_eq!(a.is_ok(), b.is_ok()),
        }
    }

    #[test]
    fn fit_beats_a_roll_grid(
        pix in prop::collection::vec((0u16..320, 112u16..224), 20..60),
        noise in prop::collection::vec(-0.02f64..0.02, 60),
        phi in -0.5f64..0.5,
    ) {
        let mut s = samples(0.3, 0.006, phi, &pix);
        for (p, e) in s.iter_mut().zip(&noise) {
            p.disparity += e;
        }
        if let Ok(fit) = fit_plane(&s) {
            prop_assert!(fit.phi.abs() <= std::f64::consts::FRAC_PI_4 + 1e-12);
            for k in -180..=180 {
                let grid_phi = (k as f64 * 0.25).to_radians();
                prop_assert!(fit.mean_sq_residual <= residual_at(&s, grid_phi) + 1e-9);
            }
        }
    }

    #[test]
    fn loss_ip_is_a_metric(a in arb_path(), b in arb_path(), c in arb_path()) {
        let ab = loss_ip(&a, &b).unwrap();
        prop_assert_eq!(loss_ip(&a, &a).unwrap(), 0.0);
        prop_assert!(ab >= 0.0);
        prop_assert_eq!(ab, loss_ip(&b, &a).unwrap());
        prop_assert!(loss_ip(&a, &c).unwrap() <= ab + loss_ip(&b, &c).unwrap() + 1e-12);
        if a != b {
            prop_assert!(ab > 0.0);
        }
    }
}

#[test]
fn noiseless_planes_are_recovered() {
    let pix: Vec<(u16, u16)> = (0..200).map(|i| ((i * 37 % 320) as u16, (112 + i * 13 % 112) as u16)).collect();
    for &(a0, a1, deg) in &[(0.05, 0.001, -30.0), (0.5, 0.01, 30.0), (0.2, 0.005, 0.0), (0.1, 0.003, 12.5)] {
        let s = visible(samples(a0, a1, f64::to_radians(deg), &pix));
        assert!(s.len() >= 50);
        let fit = fit_plane(&s).unwrap();
        assert!((fit.a0 - a0).abs() <= 1e-6, "{deg}: a0 {}", fit.a0);
        assert!((fit.a1 - a1).abs() <= 1e-6, "{deg}: a1 {}", fit.a1);
        assert!((fit.phi.to_degrees() - deg).abs() <= 0.01, "{deg}: phi {}", fit.phi.to_degrees());
        assert!(fit.mean_sq_residual <= 1e-10);
        assert_eq!(fit.sample_count, s.len());
    }
}

#[test]
fn uninformative_prediction_costs_ln2() {
    let label = BinaryMask::new(4, 3, vec![1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 1.0, 0.0, 1.0, 0.0, 0.0]).unwrap();
    let pred = BinaryMask::filled(4, 3, 0.5);
    assert!((loss_ep(&pred, &label).unwrap() - std::f64::consts::LN_2).abs() <= 1e-9);
    let perfect = loss_ep(&label, &label).unwrap();
    assert!(perfect > 0.0 && perfect < 1e-6);
}
