//! Figure-style output: costmaps with path overlays as PPM rasters or SVG.

use std::fmt::Write as _;

use crate::costmap::{CellState, Costmap};
use crate::geometry::Point2;
use crate::scene::encode_ppm;

pub const FREE_RGB: [u8; 3] = [235, 235, 235];
pub const OCCUPIED_RGB: [u8; 3] = [30, 30, 30];
pub const UNKNOWN_RGB: [u8; 3] = [150, 150, 150];
pub const PATH_RGB: [u8; 3] = [220, 40, 40];
pub const GOAL_RGB: [u8; 3] = [40, 90, 220];

pub fn cell_rgb(state: CellState) -> [u8; 3] {
    match state {
        CellState::Free => FREE_RGB,
        CellState::Occupied => OCCUPIED_RGB,
        CellState::Unknown => UNKNOWN_RGB,
    }
}

/// An overlay polyline in the map's frame.
#[derive(Clone, Debug, PartialEq)]
pub struct Overlay {
    pub points: Vec<Point2>,
    pub color: [u8; 3],
    /// Draw the last point as a goal marker.
    pub mark_goal: bool,
}

impl Overlay {
    pub fn path(points: Vec<Point2>) -> Self {
        Self {
            points,
            color: PATH_RGB,
            mark_goal: true,
        }
    }
}

/// Pixel coordinates (x right, y down) of a map-frame point, with map row 0
/// at the bottom of the image.
fn to_pixel(map: &Costmap, scale: usize, p: Point2) -> Point2 {
    let local = map.origin().inverse_transform_point(p) * (1.0 / map.resolution());
    let s = scale as f64;
    Point2::new(local.x * s, (map.height() as f64 - local.y) * s)
}

struct Canvas {
    w: usize,
    h: usize,
    px: Vec<[u8; 3]>,
}

impl Canvas {
    fn put(&mut self, x: i64, y: i64, c: [u8; 3]) {
        if x >= 0 && y >= 0 && (x as usize) < self.w && (y as usize) < self.h {
            self.px[y as usize * self.w + x as usize] = c;
        }
    }

    fn dot(&mut self, p: Point2, r: i64, c: [u8; 3]) {
        let (cx, cy) = (p.x.floor() as i64, p.y.floor() as i64);
        for dy in -r..=r {
            for dx in -r..=r {
                if dx * dx + dy * dy <= r * r {
                    self.put(cx + dx, cy + dy, c);
                }
            }
        }
    }

    fn line(&mut self, a: Point2, b: Point2, r: i64, c: [u8; 3]) {
        let n = (a.dist(b).ceil() as usize).max(1);
        for k in 0..=n {
            self.dot(a.lerp(b, k as f64 / n as f64), r, c);
        }
    }
}

/// Raster image of `map` at `scale` pixels per cell with overlays drawn on
/// top, encoded as a binary PPM.
pub fn render_ppm(map: &Costmap, overlays: &[Overlay], scale: usize, comments: &[String]) -> Vec<u8> {
    let scale = scale.max(1);
    let (w, h) = (map.width() * scale, map.height() * scale);
    let mut canvas = Canvas {
        w,
        h,
        px: vec![[0; 3]; w * h],
    };
    for y in 0..h {
        let row = map.height() - 1 - y / scale;
        for x in 0..w {
            canvas.px[y * w + x] = cell_rgb(map.get((row, x / scale)));
        }
    }
    let r = (scale as i64 / 3).max(0);
    for o in overlays {
        let pts: Vec<Point2> = o.points.iter().map(|&p| to_pixel(map, scale, p)).collect();
        for w2 in pts.windows(2) {
            canvas.line(w2[0], w2[1], r, o.color);
        }
        if let [p] = pts.as_slice() {
            canvas.dot(*p, r, o.color);
        }
        if o.mark_goal {
            if let Some(&g) = pts.last() {
                canvas.dot(g, r + scale as i64, GOAL_RGB);
            }
        }
    }
    encode_ppm(w, h, &canvas.px, comments)
}

fn hex(c: [u8; 3]) -> String {
    format!("#{:02x}{:02x}{:02x}", c[0], c[1], c[2])
}

/// Vector rendering: one rectangle per non-Free cell over a Free background,
/// overlays as polylines.
pub fn render_svg(map: &Costmap, overlays: &[Overlay], scale: usize, comments: &[String]) -> String {
    let s = scale.max(1);
    let (w, h) = (map.width() * s, map.height() * s);
    let mut out = String::new();
    let _ = writeln!(out, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#);
    for c in comments {
        let _ = writeln!(out, "<!-- {} -->", c.replace("--", "- -"));
    }
    let _ = writeln!(out, r#"<rect width="{w}" height="{h}" fill="{}"/>"#, hex(FREE_RGB));
    for r in 0..map.height() {
        for c in 0..map.width() {
            let state = map.get((r, c));
            if state != CellState::Free {
                let y = (map.height() - 1 - r) * s;
                let _ = writeln!(
                    out,
                    r#"<rect x="{}" y="{y}" width="{s}" height="{s}" fill="{}"/>"#,
                    c * s,
                    hex(cell_rgb(state))
                );
            }
        }
    }
    for o in overlays {
        let pts: Vec<String> = o
            .points
            .iter()
            .map(|&p| {
                let q = to_pixel(map, s, p);
                format!("{:.2},{:.2}", q.x, q.y)
            })
            .collect();
        let _ = writeln!(
            out,
            r#"<polyline points="{}" fill="none" stroke="{}" stroke-width="{}"/>"#,
            pts.join(" "),
            hex(o.color),
            (s as f64 / 2.0).max(1.0)
        );
        if o.mark_goal {
            if let Some(&g) = o.points.last() {
                let q = to_pixel(map, s, g);
                let _ = writeln!(out, r#"<circle cx="{:.2}" cy="{:.2}" r="{}" fill="{}"/>"#, q.x, q.y, s, hex(GOAL_RGB));
            }
        }
    }
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::costmap::GridGeometry;
    use crate::geometry::Pose2D;
    use crate::scene::parse_gray;

    fn map() -> Costmap {
        let mut m = Costmap::new(
            GridGeometry {
                width: 10,
                height: 5,
                resolution: 0.1,
                origin: Pose2D::default(),
            },
            CellState::Free,
        )
        .unwrap();
        m.set((0, 0), CellState::Occupied);
        m.set((4, 9), CellState::Unknown);
        m
    }

    #[test]
    fn ppm_palette_and_orientation() {
        let bytes = render_ppm(&map(), &[], 2, &["t".into()]);
        assert!(bytes.starts_with(b"P6\n# t\n20 10\n255\n"));
        let body = &bytes[bytes.len() - 20 * 10 * 3..];
        let px = |x: usize, y: usize| [body[(y * 20 + x) * 3], body[(y * 20 + x) * 3 + 1], body[(y * 20 + x) * 3 + 2]];
        assert_eq!(px(0, 9), OCCUPIED_RGB);
        assert_eq!(px(19, 0), UNKNOWN_RGB);
        assert_eq!(px(5, 5), FREE_RGB);
        assert!(parse_gray(&bytes).is_err() || bytes[1] == b'6');
    }

    #[test]
    fn overlay_is_drawn() {
        let o = Overlay::path(vec![Point2::new(0.15, 0.25), Point2::new(0.85, 0.25)]);
        let bytes = render_ppm(&map(), &[o.clone()], 3, &[]);
        assert!(bytes.windows(3).any(|w| w == PATH_RGB));
        let svg = render_svg(&map(), &[o], 3, &["x".into()]);
        assert!(svg.contains("<polyline") && svg.contains("<!-- x -->") && svg.ends_with("</svg>\n"));
    }
}
