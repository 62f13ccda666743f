//! Occupancy grids in the projected body frame (or any planar frame) and the
//! pipeline that builds them from labeled point clouds.

mod build;
mod raster;

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Point2, Pose2D};

pub use build::{
    build_costmap, constrict_free, disc_offsets, inflate_occupied, perceive, project_to_body,
    BuildOptions, RobotFootprint,
};
pub use raster::{fill_convex_polygon, ray_cells};

pub const DEFAULT_RESOLUTION: f64 = 0.1;
pub const LOCAL_WIDTH: usize = 100;
pub const LOCAL_HEIGHT: usize = 100;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CellState {
    Unknown,
    Free,
    Occupied,
}

impl CellState {
    pub fn symbol(self) -> char {
        match self {
            CellState::Unknown => 'U',
            CellState::Free => 'F',
            CellState::Occupied => 'O',
        }
    }

    pub fn from_symbol(c: char) -> Option<Self> {
        match c {
            'U' => Some(CellState::Unknown),
            'F' => Some(CellState::Free),
            'O' => Some(CellState::Occupied),
            _ => None,
        }
    }
}

/// Row/column index of a cell. Columns advance along the grid's local x axis,
/// rows along its local y axis.
pub type Cell = (usize, usize);

/// Size, resolution and placement of a grid, without cell contents.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridGeometry {
    pub width: usize,
    pub height: usize,
    pub resolution: f64,
    /// Pose of the outer corner of cell (0, 0).
    pub origin: Pose2D,
}

impl GridGeometry {
    /// The 10 m x 10 m robot-centric grid: 1 m behind the robot, 9 m ahead
    /// and 5 m to either side, with the robot at the center of cell (50, 10).
    pub fn local_default() -> Self {
        let res = DEFAULT_RESOLUTION;
        Self {
            width: LOCAL_WIDTH,
            height: LOCAL_HEIGHT,
            resolution: res,
            origin: Pose2D::new(-10.5 * res, -50.5 * res, 0.0),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Costmap {
    width: usize,
    height: usize,
    resolution: f64,
    origin: Pose2D,
    cells: Vec<CellState>,
}

impl Costmap {
    pub fn new(geometry: GridGeometry, fill: CellState) -> Result<Self> {
        let GridGeometry {
            width,
            height,
            resolution,
            origin,
        } = geometry;
        if width == 0 || height == 0 {
            return Err(Error::contract("costmap dimensions must be positive"));
        }
        if !(resolution > 0.0 && resolution.is_finite()) || !origin.is_finite() {
            return Err(Error::contract("costmap resolution and origin must be finite, resolution > 0"));
        }
        Ok(Self {
            width,
            height,
            resolution,
            origin,
            cells: vec![fill; width * height],
        })
    }

    pub fn from_cells(geometry: GridGeometry, cells: Vec<CellState>) -> Result<Self> {
        if cells.len() != geometry.width * geometry.height {
            return Err(Error::contract(format!(
                "expected {} cells, got {}",
                geometry.width * geometry.height,
                cells.len()
            )));
        }
        let mut map = Self::new(geometry, CellState::Unknown)?;
        map.cells = cells;
        Ok(map)
    }

    pub fn geometry(&self) -> GridGeometry {
        GridGeometry {
            width: self.width,
            height: self.height,
            resolution: self.resolution,
            origin: self.origin,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    pub fn origin(&self) -> Pose2D {
        self.origin
    }

    pub fn cells(&self) -> &[CellState] {
        &self.cells
    }

    pub fn get(&self, cell: Cell) -> CellState {
        self.cells[cell.0 * self.width + cell.1]
    }

    pub fn set(&mut self, cell: Cell, state: CellState) {
        self.cells[cell.0 * self.width + cell.1] = state;
    }

    /// State at signed indices; out-of-bounds reads as `None`.
    pub fn get_signed(&self, row: i64, col: i64) -> Option<CellState> {
        if row < 0 || col < 0 || row >= self.height as i64 || col >= self.width as i64 {
            None
        } else {
            Some(self.get((row as usize, col as usize)))
        }
    }

    pub fn is_free(&self, cell: Cell) -> bool {
        self.get(cell) == CellState::Free
    }

    pub fn count(&self, state: CellState) -> usize {
        self.cells.iter().filter(|&&s| s == state).count()
    }

    pub fn cell_center(&self, cell: Cell) -> Point2 {
        self.origin.transform_point(Point2::new(
            (cell.1 as f64 + 0.5) * self.resolution,
            (cell.0 as f64 + 0.5) * self.resolution,
        ))
    }

    /// Signed (row, col) of the cell containing `p`, possibly out of bounds.
    pub fn signed_cell_of(&self, p: Point2) -> (i64, i64) {
        let l = self.origin.inverse_transform_point(p);
        (
            (l.y / self.resolution).floor() as i64,
            (l.x / self.resolution).floor() as i64,
        )
    }

    pub fn cell_of(&self, p: Point2) -> Option<Cell> {
        if !p.is_finite() {
            return None;
        }
        let (r, c) = self.signed_cell_of(p);
        self.get_signed(r, c).map(|_| (r as usize, c as usize))
    }

    pub fn state_at(&self, p: Point2) -> Option<CellState> {
        self.cell_of(p).map(|c| self.get(c))
    }

    pub fn is_free_point(&self, p: Point2) -> bool {
        self.state_at(p) == Some(CellState::Free)
    }

    /// Maps grid-local metric coordinates (cell (0,0) corner at the origin)
    /// into the map frame.
    pub fn local_to_frame(&self, local: Point2) -> Point2 {
        self.origin.transform_point(local)
    }

    pub fn extent(&self) -> (f64, f64) {
        (
            self.width as f64 * self.resolution,
            self.height as f64 * self.resolution,
        )
    }

    pub fn free_cells(&self) -> impl Iterator<Item = Cell> + '_ {
        (0..self.height)
            .flat_map(move |r| (0..self.width).map(move |c| (r, c)))
            .filter(move |&c| self.is_free(c))
    }

    pub fn neighbors8(&self, cell: Cell) -> impl Iterator<Item = Cell> + '_ {
        const D: [(i64, i64); 8] = [
            (-1, -1),
            (-1, 0),
            (-1, 1),
            (0, -1),
            (0, 1),
            (1, -1),
            (1, 0),
            (1, 1),
        ];
        D.iter().filter_map(move |&(dr, dc)| {
            let (r, c) = (cell.0 as i64 + dr, cell.1 as i64 + dc);
            self.get_signed(r, c).map(|_| (r as usize, c as usize))
        })
    }

    pub fn same_geometry(&self, other: &Costmap) -> bool {
        self.width == other.width
            && self.height == other.height
            && self.resolution == other.resolution
            && self.origin == other.origin
    }

    /// Text form: header line then one row of `U`/`F`/`O` per grid row,
    /// row 0 first. `comments` become leading `#` lines.
    pub fn to_text(&self, comments: &[String]) -> String {
        let mut s = String::with_capacity(self.cells.len() + self.height + 128);
        for c in comments {
            let _ = writeln!(s, "# {c}");
        }
        let _ = writeln!(
            s,
            "costmap {} {} {} {} {} {}",
            self.width, self.height, self.resolution, self.origin.x, self.origin.y, self.origin.theta
        );
        for r in 0..self.height {
            s.extend(self.cells[r * self.width..(r + 1) * self.width].iter().map(|c| c.symbol()));
            s.push('\n');
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut offset = 0usize;
        let mut lines = text.split_inclusive('\n').map(|l| {
            let start = offset;
            offset += l.len();
            (start, l.trim_end_matches(['\n', '\r']))
        });
        let (hoff, header) = loop {
            match lines.next() {
                Some((_, l)) if l.starts_with('#') || l.trim().is_empty() => continue,
                Some(x) => break x,
                None => return Err(Error::parse(text.len(), "missing costmap header")),
            }
        };
        let fields: Vec<&str> = header.split_whitespace().collect();
        if fields.len() != 7 || fields[0] != "costmap" {
            return Err(Error::parse(
                hoff,
                "header must be `costmap <width> <height> <resolution> <origin_x> <origin_y> <origin_theta>`",
            ));
        }
        let field_offset = |i: usize| hoff + header.find(fields[i]).unwrap_or(0);
        let uint = |i: usize| -> Result<usize> {
            fields[i]
                .parse::<usize>()
                .map_err(|_| Error::parse(field_offset(i), format!("invalid integer `{}`", fields[i])))
        };
        let float = |i: usize| -> Result<f64> {
            fields[i]
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::parse(field_offset(i), format!("invalid number `{}`", fields[i])))
        };
        let (width, height) = (uint(1)?, uint(2)?);
        let resolution = float(3)?;
        let origin = Pose2D {
            x: float(4)?,
            y: float(5)?,
            theta: float(6)?,
        };
        if width == 0 || height == 0 || resolution <= 0.0 {
            return Err(Error::parse(hoff, "dimensions and resolution must be positive"));
        }
        let mut cells = Vec::with_capacity(width * height);
        for r in 0..height {
            let (loff, line) = lines
                .next()
                .ok_or_else(|| Error::parse(text.len(), format!("missing row {r}")))?;
            if line.chars().count() != width {
                return Err(Error::parse(
                    loff,
                    format!("row {r} has {} cells, expected {width}", line.chars().count()),
                ));
            }
            for (i, ch) in line.char_indices() {
                cells.push(
                    CellState::from_symbol(ch)
                        .ok_or_else(|| Error::parse(loff + i, format!("invalid cell symbol `{ch}`")))?,
                );
            }
        }
        for (loff, l) in lines {
            if !l.trim().is_empty() && !l.starts_with('#') {
                return Err(Error::parse(loff, "unexpected data after last row"));
            }
        }
        Costmap::from_cells(
            GridGeometry {
                width,
                height,
                resolution,
                origin,
            },
            cells,
        )
    }
}

pub fn load_costmap(path: impl AsRef<Path>) -> Result<Costmap> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Costmap::parse(&text)
}

/// Weighted disagreement between two maps of identical geometry: 0 for equal
/// cells, 1 for a Free/Occupied conflict, 0.5 when exactly one side is
/// Unknown, averaged over cells.
pub fn costmap_distance(a: &Costmap, b: &Costmap) -> Result<f64> {
    if !a.same_geometry(b) {
        return Err(Error::contract("costmap_distance needs maps of identical geometry"));
    }
    let mut half_units: u64 = 0;
    for (&x, &y) in a.cells.iter().zip(&b.cells) {
        half_units += match (x, y) {
            _ if x == y => 0,
            (CellState::Unknown, _) | (_, CellState::Unknown) => 1,
            _ => 2,
        };
    }
    Ok(half_units as f64 / (2 * a.cells.len()) as f64)
}

/// True iff `p` falls on a Free cell.
pub fn is_traversable(map: &Costmap, p: &Pose2D) -> bool {
    map.is_free_point(p.position())
}
