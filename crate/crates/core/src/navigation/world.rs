use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::costmap::{constrict_free, inflate_occupied, CellState, Costmap, GridGeometry, RobotFootprint};
use crate::error::Result;
use crate::geometry::{Point2, Pose2D};

use super::sight_cells;

/// Ground-truth occupancy of a whole environment plus the inflated map that
/// global planning uses.
#[derive(Clone, Debug, PartialEq)]
pub struct WorldMap {
    grid: Costmap,
    planning: Costmap,
    footprint: RobotFootprint,
}

impl WorldMap {
    pub fn new(grid: Costmap, footprint: RobotFootprint) -> Result<Self> {
        footprint.validate()?;
        let planning = inflate_occupied(
            &constrict_free(&grid, footprint.constriction_radius),
            footprint.inflation_radius,
        );
        Ok(Self {
            grid,
            planning,
            footprint,
        })
    }

    pub fn grid(&self) -> &Costmap {
        &self.grid
    }

    pub fn planning(&self) -> &Costmap {
        &self.planning
    }

    pub fn footprint(&self) -> &RobotFootprint {
        &self.footprint
    }

    /// True iff no Occupied cell lies on the segment from `from` to `to`,
    /// ignoring the cell of `from` and, with `skip_target`, the cell of `to`.
    pub fn line_of_sight(&self, from: Point2, to: Point2, skip_target: bool) -> bool {
        let target = self.grid.cell_of(to);
        sight_cells(self, from, to)
            .into_iter()
            .filter(|c| !(skip_target && Some(*c) == target))
            .all(|c| self.grid.get(c) != CellState::Occupied)
    }
}

/// A world with a start and a goal pose.
#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    pub world: WorldMap,
    pub start: Pose2D,
    pub goal: Pose2D,
}

fn grid_for(x0: f64, y0: f64, x1: f64, y1: f64) -> GridGeometry {
    let res = 0.1;
    GridGeometry {
        width: ((x1 - x0) / res).round() as usize,
        height: ((y1 - y0) / res).round() as usize,
        resolution: res,
        origin: Pose2D::new(x0, y0, 0.0),
    }
}

/// A 30 m corridor, 4 m wide, with square pillars 0.6 m across placed every
/// 4 to 6 m on alternating sides of the centerline.
pub fn corridor_world(seed: u64) -> Scenario {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let geom = grid_for(-1.0, -3.0, 31.0, 3.0);
    let mut pillars = Vec::new();
    let mut x = rng.random_range(4.0..6.0);
    let mut side = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
    while x < 26.0 {
        pillars.push(Point2::new(x, 0.8 * side));
        x += rng.random_range(4.0..6.0);
        side = -side;
    }
    let mut grid = Costmap::new(geom, CellState::Free).expect("valid corridor geometry");
    for r in 0..geom.height {
        for c in 0..geom.width {
            let p = grid.cell_center((r, c));
            let wall = p.y.abs() >= 2.0 || p.x < 0.0 || p.x > 30.0;
            let pillar = pillars.iter().any(|q| (p.x - q.x).abs() <= 0.3 && (p.y - q.y).abs() <= 0.3);
            if wall || pillar {
                grid.set((r, c), CellState::Occupied);
            }
        }
    }
    Scenario {
        world: WorldMap::new(grid, RobotFootprint::default()).expect("default footprint"),
        start: Pose2D::new(1.5, 0.0, 0.0),
        goal: Pose2D::new(28.5, 0.0, 0.0),
    }
}

/// An obstacle-free field `length` m long and 10 m wide, start at the origin
/// facing the goal `length - 2` m ahead.
pub fn open_world(length: f64) -> Scenario {
    let geom = grid_for(-2.0, -5.0, length, 5.0);
    let grid = Costmap::new(geom, CellState::Free).expect("valid open geometry");
    Scenario {
        world: WorldMap::new(grid, RobotFootprint::default()).expect("default footprint"),
        start: Pose2D::default(),
        goal: Pose2D::new(length - 2.0, 0.0, 0.0),
    }
}
