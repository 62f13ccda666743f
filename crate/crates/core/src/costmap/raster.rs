use crate::geometry::{polygon_area, Point2};

use super::{Cell, GridGeometry};

const EDGE_EPS: f64 = 1e-9;

/// Cells whose centers lie inside (or on the boundary of) the convex polygon
/// `poly`, given in the grid's parent frame. Polygons with fewer than three
/// vertices or zero area are rasterized by dense sampling along their edges.
pub fn fill_convex_polygon(geom: &GridGeometry, poly: &[Point2]) -> Vec<Cell> {
    let res = geom.resolution;
    // Work in grid units: cell (r, c) has its center at (c + 0.5, r + 0.5).
    let local: Vec<Point2> = poly
        .iter()
        .map(|&p| geom.origin.inverse_transform_point(p) * (1.0 / res))
        .collect();
    if local.is_empty() {
        return Vec::new();
    }
    if local.len() < 3 || polygon_area(&local).abs() < 1e-12 {
        return sample_polyline(geom, &local);
    }
    let (ymin, ymax) = local
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| (lo.min(p.y), hi.max(p.y)));
    let r0 = ((ymin - 0.5 - EDGE_EPS).ceil().max(0.0)) as i64;
    let r1 = ((ymax - 0.5 + EDGE_EPS).floor()).min(geom.height as f64 - 1.0) as i64;
    let mut out = Vec::new();
    for r in r0..=r1 {
        let y = r as f64 + 0.5;
        let mut xl = f64::INFINITY;
        let mut xr = f64::NEG_INFINITY;
        for i in 0..local.len() {
            let a = local[i];
            let b = local[(i + 1) % local.len()];
            let (lo, hi) = if a.y <= b.y { (a, b) } else { (b, a) };
            if y < lo.y - EDGE_EPS || y > hi.y + EDGE_EPS {
                continue;
            }
            if (hi.y - lo.y).abs() < 1e-12 {
                xl = xl.min(lo.x.min(hi.x));
                xr = xr.max(lo.x.max(hi.x));
            } else {
                let t = ((y - lo.y) / (hi.y - lo.y)).clamp(0.0, 1.0);
                let x = lo.x + t * (hi.x - lo.x);
                xl = xl.min(x);
                xr = xr.max(x);
            }
        }
        if xl > xr {
            continue;
        }
        let c0 = ((xl - 0.5 - EDGE_EPS).ceil().max(0.0)) as i64;
        let c1 = ((xr - 0.5 + EDGE_EPS).floor()).min(geom.width as f64 - 1.0) as i64;
        for c in c0..=c1 {
            out.push((r as usize, c as usize));
        }
    }
    out
}

fn sample_polyline(geom: &GridGeometry, local: &[Point2]) -> Vec<Cell> {
    let mut out = Vec::new();
    let mut push = |p: Point2| {
        let (r, c) = (p.y.floor(), p.x.floor());
        if r >= 0.0 && c >= 0.0 && (r as usize) < geom.height && (c as usize) < geom.width {
            let cell = (r as usize, c as usize);
            if out.last() != Some(&cell) {
                out.push(cell);
            }
        }
    };
    if local.len() == 1 {
        push(local[0]);
    }
    let edges = if local.len() > 2 { local.len() } else { local.len() - 1 };
    for i in 0..edges {
        let a = local[i];
        let b = local[(i + 1) % local.len()];
        let n = ((b - a).norm() * 4.0).ceil().max(1.0) as usize;
        for k in 0..=n {
            push(a.lerp(b, k as f64 / n as f64));
        }
    }
    out.sort_unstable();
    out.dedup();
    out
}

/// In-bounds cells crossed by the segment `a -> b` (parent frame), in
/// traversal order, by grid voxel traversal.
pub fn ray_cells(geom: &GridGeometry, a: Point2, b: Point2) -> Vec<Cell> {
    let res = geom.resolution;
    let la = geom.origin.inverse_transform_point(a) * (1.0 / res);
    let lb = geom.origin.inverse_transform_point(b) * (1.0 / res);
    let mut col = la.x.floor() as i64;
    let mut row = la.y.floor() as i64;
    let end_col = lb.x.floor() as i64;
    let end_row = lb.y.floor() as i64;
    let d = lb - la;
    let step_c: i64 = if d.x > 0.0 { 1 } else { -1 };
    let step_r: i64 = if d.y > 0.0 { 1 } else { -1 };
    let t_delta_c = if d.x != 0.0 { (1.0 / d.x).abs() } else { f64::INFINITY };
    let t_delta_r = if d.y != 0.0 { (1.0 / d.y).abs() } else { f64::INFINITY };
    let mut t_max_c = if d.x > 0.0 {
        ((col + 1) as f64 - la.x) / d.x
    } else if d.x < 0.0 {
        (la.x - col as f64) / -d.x
    } else {
        f64::INFINITY
    };
    let mut t_max_r = if d.y > 0.0 {
        ((row + 1) as f64 - la.y) / d.y
    } else if d.y < 0.0 {
        (la.y - row as f64) / -d.y
    } else {
        f64::INFINITY
    };
    let in_bounds = |r: i64, c: i64| r >= 0 && c >= 0 && r < geom.height as i64 && c < geom.width as i64;
    let mut out = Vec::new();
    let max_steps = (end_col - col).abs() + (end_row - row).abs() + 2;
    for _ in 0..=max_steps {
        if in_bounds(row, col) {
            out.push((row as usize, col as usize));
        }
        if row == end_row && col == end_col {
            break;
        }
        if t_max_c < t_max_r {
            col += step_c;
            t_max_c += t_delta_c;
        } else {
            row += step_r;
            t_max_r += t_delta_r;
        }
        if t_max_c.min(t_max_r) > 1.0 + 1e-12 && (row != end_row || col != end_col) {
            // numeric drift past the endpoint: finish at the end cell
            if in_bounds(row, col) {
                out.push((row as usize, col as usize));
            }
            if in_bounds(end_row, end_col) && out.last() != Some(&(end_row as usize, end_col as usize)) {
                out.push((end_row as usize, end_col as usize));
            }
            break;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Pose2D;

    fn geom(w: usize, h: usize) -> GridGeometry {
        GridGeometry {
            width: w,
            height: h,
            resolution: 0.1,
            origin: Pose2D::default(),
        }
    }

    #[test]
    fn square_fill_uses_cell_centers() {
        let g = geom(20, 20);
        let sq = [
            Point2::new(0.2, 0.2),
            Point2::new(0.6, 0.2),
            Point2::new(0.6, 0.6),
            Point2::new(0.2, 0.6),
        ];
        let cells = fill_convex_polygon(&g, &sq);
        // centers 0.25..0.55 in both axes
        assert_eq!(cells.len(), 16);
        assert!(cells.iter().all(|&(r, c)| (2..6).contains(&r) && (2..6).contains(&c)));
    }

    #[test]
    fn fill_matches_point_in_polygon() {
        let g = geom(30, 30);
        let tri = [Point2::new(0.13, 0.27), Point2::new(2.71, 0.5), Point2::new(1.1, 2.84)];
        let mut fast = fill_convex_polygon(&g, &tri);
        fast.sort_unstable();
        let mut slow = Vec::new();
        for r in 0..30 {
            for c in 0..30 {
                let p = Point2::new((c as f64 + 0.5) * 0.1, (r as f64 + 0.5) * 0.1);
                if crate::geometry::point_in_polygon(&tri, p) {
                    slow.push((r, c));
                }
            }
        }
        assert_eq!(fast, slow);
    }

    #[test]
    fn degenerate_hulls() {
        let g = geom(10, 10);
        assert_eq!(fill_convex_polygon(&g, &[Point2::new(0.35, 0.45)]), vec![(4, 3)]);
        let seg = fill_convex_polygon(&g, &[Point2::new(0.05, 0.05), Point2::new(0.95, 0.05)]);
        assert_eq!(seg.len(), 10);
    }

    #[test]
    fn ray_cells_straight_and_diagonal() {
        let g = geom(10, 10);
        let cells = ray_cells(&g, Point2::new(0.05, 0.05), Point2::new(0.95, 0.05));
        assert_eq!(cells, (0..10).map(|c| (0, c)).collect::<Vec<_>>());
        let cells = ray_cells(&g, Point2::new(0.05, 0.05), Point2::new(0.35, 0.15));
        assert_eq!(cells.first(), Some(&(0, 0)));
        assert_eq!(cells.last(), Some(&(1, 3)));
        for w in cells.windows(2) {
            let dr = (w[0].0 as i64 - w[1].0 as i64).abs();
            let dc = (w[0].1 as i64 - w[1].1 as i64).abs();
            assert_eq!(dr + dc, 1);
        }
    }

    #[test]
    fn ray_cells_match_supersampling() {
        let g = geom(40, 40);
        let pts = [
            (Point2::new(0.31, 0.07), Point2::new(3.77, 2.93)),
            (Point2::new(3.9, 3.9), Point2::new(0.02, 1.13)),
            (Point2::new(1.0, 0.55), Point2::new(1.0, 3.55)),
        ];
        for (a, b) in pts {
            let mut fast = ray_cells(&g, a, b);
            fast.sort_unstable();
            let mut slow = Vec::new();
            let n = 20000;
            for k in 0..=n {
                let p = a.lerp(b, k as f64 / n as f64);
                slow.push(((p.y / 0.1).floor() as usize, (p.x / 0.1).floor() as usize));
            }
            slow.sort_unstable();
            slow.dedup();
            // every supersampled cell is found by the traversal
            for c in &slow {
                assert!(fast.binary_search(c).is_ok(), "{c:?} missing");
            }
        }
    }
}
