//! Optimal search on the 8-connected grid: A* and jump point search.
//!
//! Straight steps cost 1 and diagonal steps sqrt(2) (in cells). A diagonal
//! step only requires its target cell to be Free.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::f64::consts::SQRT_2;

use crate::costmap::{Cell, Costmap};

pub(crate) fn octile(a: Cell, b: Cell) -> f64 {
    let dr = a.0.abs_diff(b.0) as f64;
    let dc = a.1.abs_diff(b.1) as f64;
    let (lo, hi) = if dr < dc { (dr, dc) } else { (dc, dr) };
    (hi - lo) + SQRT_2 * lo
}

#[derive(Clone, Copy, Debug)]
struct OpenEntry {
    f: f64,
    g: f64,
    cell: Cell,
}

impl PartialEq for OpenEntry {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for OpenEntry {}

impl Ord for OpenEntry {
    /// Max-heap order: lowest f first, then highest g, then smallest cell.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .f
            .total_cmp(&self.f)
            .then(self.g.total_cmp(&other.g))
            .then(other.cell.cmp(&self.cell))
    }
}

impl PartialOrd for OpenEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

struct Search {
    width: usize,
    g: Vec<f64>,
    parent: Vec<usize>,
    closed: Vec<bool>,
    open: BinaryHeap<OpenEntry>,
}

impl Search {
    fn new(map: &Costmap) -> Self {
        let n = map.width() * map.height();
        Self {
            width: map.width(),
            g: vec![f64::INFINITY; n],
            parent: vec![usize::MAX; n],
            closed: vec![false; n],
            open: BinaryHeap::new(),
        }
    }

    fn idx(&self, c: Cell) -> usize {
        c.0 * self.width + c.1
    }

    fn cell(&self, i: usize) -> Cell {
        (i / self.width, i % self.width)
    }

    fn seed(&mut self, start: Cell, goal: Cell) {
        let i = self.idx(start);
        self.g[i] = 0.0;
        self.open.push(OpenEntry {
            f: octile(start, goal),
            g: 0.0,
            cell: start,
        });
    }

    /// Pops the next unexpanded entry and marks it closed.
    fn pop(&mut self) -> Option<OpenEntry> {
        while let Some(e) = self.open.pop() {
            let i = self.idx(e.cell);
            if self.closed[i] || e.g > self.g[i] {
                continue;
            }
            self.closed[i] = true;
            return Some(e);
        }
        None
    }

    fn relax(&mut self, from: Cell, to: Cell, g: f64, goal: Cell) {
        let j = self.idx(to);
        if self.closed[j] || g >= self.g[j] {
            return;
        }
        self.g[j] = g;
        self.parent[j] = self.idx(from);
        self.open.push(OpenEntry {
            f: g + octile(to, goal),
            g,
            cell: to,
        });
    }

    fn chain(&self, goal: Cell) -> Vec<Cell> {
        let mut out = vec![goal];
        let mut i = self.idx(goal);
        while self.parent[i] != usize::MAX {
            i = self.parent[i];
            out.push(self.cell(i));
        }
        out.reverse();
        out
    }
}

/// A* with the octile heuristic. Returns the cell sequence from `start` to
/// `goal`, or `None` when the goal is unreachable.
pub fn astar(map: &Costmap, start: Cell, goal: Cell) -> Option<Vec<Cell>> {
    if !map.is_free(start) || !map.is_free(goal) {
        return None;
    }
    let mut s = Search::new(map);
    s.seed(start, goal);
    while let Some(e) = s.pop() {
        if e.cell == goal {
            return Some(s.chain(goal));
        }
        for n in map.neighbors8(e.cell) {
            if !map.is_free(n) {
                continue;
            }
            let step = if n.0 != e.cell.0 && n.1 != e.cell.1 { SQRT_2 } else { 1.0 };
            s.relax(e.cell, n, e.g + step, goal);
        }
    }
    None
}

struct Jumper<'a> {
    map: &'a Costmap,
    goal: (i64, i64),
}

impl Jumper<'_> {
    fn free(&self, r: i64, c: i64) -> bool {
        self.map.get_signed(r, c) == Some(crate::costmap::CellState::Free)
    }

    /// Next jump point from `(r, c)` moving by `(dr, dc)`.
    fn jump(&self, mut r: i64, mut c: i64, dr: i64, dc: i64) -> Option<(i64, i64)> {
        loop {
            r += dr;
            c += dc;
            if !self.free(r, c) {
                return None;
            }
            if (r, c) == self.goal {
                return Some((r, c));
            }
            if dr != 0 && dc != 0 {
                if (self.free(r + dr, c - dc) && !self.free(r, c - dc))
                    || (self.free(r - dr, c + dc) && !self.free(r - dr, c))
                {
                    return Some((r, c));
                }
                if self.jump(r, c, dr, 0).is_some() || self.jump(r, c, 0, dc).is_some() {
                    return Some((r, c));
                }
            } else if dr != 0 {
                if (self.free(r + dr, c + 1) && !self.free(r, c + 1))
                    || (self.free(r + dr, c - 1) && !self.free(r, c - 1))
                {
                    return Some((r, c));
                }
            } else if (self.free(r + 1, c + dc) && !self.free(r + 1, c))
                || (self.free(r - 1, c + dc) && !self.free(r - 1, c))
            {
                return Some((r, c));
            }
        }
    }

    /// Directions worth exploring from `(r, c)` reached along `(dr, dc)`.
    fn pruned_dirs(&self, r: i64, c: i64, dir: Option<(i64, i64)>) -> Vec<(i64, i64)> {
        let mut out = Vec::with_capacity(8);
        match dir {
            None => {
                for dr in -1..=1 {
                    for dc in -1..=1 {
                        if (dr, dc) != (0, 0) {
                            out.push((dr, dc));
                        }
                    }
                }
            }
            Some((dr, dc)) if dr != 0 && dc != 0 => {
                out.push((dr, 0));
                out.push((0, dc));
                out.push((dr, dc));
                if !self.free(r, c - dc) {
                    out.push((dr, -dc));
                }
                if !self.free(r - dr, c) {
                    out.push((-dr, dc));
                }
            }
            Some((dr, 0)) => {
                out.push((dr, 0));
                if !self.free(r, c + 1) {
                    out.push((dr, 1));
                }
                if !self.free(r, c - 1) {
                    out.push((dr, -1));
                }
            }
            Some((0, dc)) => {
                out.push((0, dc));
                if !self.free(r + 1, c) {
                    out.push((1, dc));
                }
                if !self.free(r - 1, c) {
                    out.push((-1, dc));
                }
            }
            Some(_) => {}
        }
        out
    }
}

/// Jump point search. Produces a path of the same cost as A*, expanded to
/// every intermediate cell.
pub fn jps(map: &Costmap, start: Cell, goal: Cell) -> Option<Vec<Cell>> {
    if !map.is_free(start) || !map.is_free(goal) {
        return None;
    }
    let j = Jumper {
        map,
        goal: (goal.0 as i64, goal.1 as i64),
    };
    let mut s = Search::new(map);
    s.seed(start, goal);
    while let Some(e) = s.pop() {
        if e.cell == goal {
            return Some(expand(&s.chain(goal)));
        }
        let (r, c) = (e.cell.0 as i64, e.cell.1 as i64);
        let pi = s.parent[s.idx(e.cell)];
        let dir = (pi != usize::MAX).then(|| {
            let p = s.cell(pi);
            ((r - p.0 as i64).signum(), (c - p.1 as i64).signum())
        });
        for (dr, dc) in j.pruned_dirs(r, c, dir) {
            if let Some((jr, jc)) = j.jump(r, c, dr, dc) {
                let to = (jr as usize, jc as usize);
                s.relax(e.cell, to, e.g + octile(e.cell, to), goal);
            }
        }
    }
    None
}

/// Fills in the straight or diagonal runs between consecutive jump points.
fn expand(points: &[Cell]) -> Vec<Cell> {
    let mut out = vec![points[0]];
    for w in points.windows(2) {
        let (mut r, mut c) = (w[0].0 as i64, w[0].1 as i64);
        let (tr, tc) = (w[1].0 as i64, w[1].1 as i64);
        let (dr, dc) = ((tr - r).signum(), (tc - c).signum());
        while (r, c) != (tr, tc) {
            r += dr;
            c += dc;
            out.push((r as usize, c as usize));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::costmap::{CellState, GridGeometry};
    use crate::geometry::Pose2D;
    use crate::planners::GridPath;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

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

    /// Plain Dijkstra over straight/diagonal step counts; costs compare
    /// exactly as `s + d * sqrt(2)`.
    fn dijkstra(m: &Costmap, start: Cell, goal: Cell) -> Option<f64> {
        let n = m.width() * m.height();
        let mut dist = vec![f64::INFINITY; n];
        let mut done = vec![false; n];
        dist[start.0 * m.width() + start.1] = 0.0;
        loop {
            let mut best = None;
            for i in 0..n {
                if !done[i] && dist[i].is_finite() && best.is_none_or(|b: usize| dist[i] < dist[b]) {
                    best = Some(i);
                }
            }
            let i = best?;
            done[i] = true;
            let c = (i / m.width(), i % m.width());
            if c == goal {
                return Some(dist[i]);
            }
            for nb in m.neighbors8(c) {
                if !m.is_free(nb) {
                    continue;
                }
                let step = if nb.0 != c.0 && nb.1 != c.1 { SQRT_2 } else { 1.0 };
                let j = nb.0 * m.width() + nb.1;
                if dist[i] + step < dist[j] {
                    dist[j] = dist[i] + step;
                }
            }
        }
    }

    #[test]
    fn empty_map_examples() {
        let m = map(10, 10);
        let p = GridPath::new(&m, astar(&m, (0, 0), (0, 9)).unwrap()).unwrap();
        assert!((p.length() - 0.9).abs() < 1e-12);
        let p = GridPath::new(&m, astar(&m, (0, 0), (9, 9)).unwrap()).unwrap();
        assert!((p.length() - 9.0 * SQRT_2 * 0.1).abs() < 1e-12);
        assert_eq!(astar(&m, (4, 4), (4, 4)).unwrap(), vec![(4, 4)]);
        assert_eq!(jps(&m, (4, 4), (4, 4)).unwrap(), vec![(4, 4)]);
    }

    #[test]
    fn walled_off_goal() {
        let mut m = map(10, 10);
        for r in 0..10 {
            m.set((r, 5), CellState::Occupied);
        }
        assert!(astar(&m, (0, 0), (0, 9)).is_none());
        assert!(jps(&m, (0, 0), (0, 9)).is_none());
    }

    #[test]
    fn optimal_on_random_maps() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..40 {
            let mut m = map(20, 20);
            for r in 0..20 {
                for c in 0..20 {
                    if rng.random_bool(0.25) {
                        m.set((r, c), CellState::Occupied);
                    }
                }
            }
            m.set((0, 0), CellState::Free);
            m.set((19, 19), CellState::Free);
            let reference = dijkstra(&m, (0, 0), (19, 19));
            let a = astar(&m, (0, 0), (19, 19));
            let j = jps(&m, (0, 0), (19, 19));
            assert_eq!(reference.is_some(), a.is_some());
            assert_eq!(a.is_some(), j.is_some());
            if let (Some(d), Some(a), Some(j)) = (reference, a, j) {
                let la = GridPath::new(&m, a).unwrap().length();
                let lj = GridPath::new(&m, j).unwrap().length();
                assert!((la - d * 0.1).abs() < 1e-9);
                assert_eq!(la, lj);
            }
        }
    }
}
