//! Sampling-based planners in the continuous map frame: RRT* and PRM, plus
//! shortcut smoothing and conversion back to grid cells.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::costmap::{Cell, Costmap};
use crate::geometry::Point2;

use super::path::adjacent8;
use super::{collision_check, PrmParams, RrtStarParams};

fn sample_in_bounds(map: &Costmap, rng: &mut ChaCha8Rng) -> Point2 {
    let (w, h) = map.extent();
    let local = Point2::new(rng.random::<f64>() * w, rng.random::<f64>() * h);
    map.local_to_frame(local)
}

struct TreeNode {
    pos: Point2,
    parent: Option<usize>,
    cost: f64,
    children: Vec<usize>,
}

#[derive(Clone, Debug)]
pub struct RrtStarOutput {
    /// Start to goal through the best tree branch; empty if none was found.
    pub polyline: Vec<Point2>,
    /// Cost of that branch, infinite when no path was found.
    pub cost: f64,
    /// Best cost after every iteration.
    pub history: Vec<f64>,
}

/// RRT* with goal biasing, shrinking rewire radius and cost propagation to
/// descendants after every rewire.
pub fn rrt_star(map: &Costmap, start: Point2, goal: Point2, params: &RrtStarParams, step: f64, seed: u64) -> RrtStarOutput {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut nodes = vec![TreeNode {
        pos: start,
        parent: None,
        cost: 0.0,
        children: Vec::new(),
    }];
    let mut goal_nodes: Vec<usize> = Vec::new();
    if start.dist(goal) <= params.goal_tolerance && collision_check(map, start, goal, step) {
        goal_nodes.push(0);
    }
    let best_of = |nodes: &[TreeNode], goal_nodes: &[usize]| -> (f64, Option<usize>) {
        let mut best = (f64::INFINITY, None);
        for &g in goal_nodes {
            let c = nodes[g].cost + nodes[g].pos.dist(goal);
            if c < best.0 {
                best = (c, Some(g));
            }
        }
        best
    };
    let mut history = Vec::with_capacity(params.max_iters);
    let mut near: Vec<usize> = Vec::new();
    for _ in 0..params.max_iters {
        let target = if rng.random::<f64>() < params.goal_bias {
            goal
        } else {
            sample_in_bounds(map, &mut rng)
        };
        let nearest = nodes
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.pos.dist(target).total_cmp(&b.1.pos.dist(target)))
            .map(|(i, _)| i)
            .expect("tree is never empty");
        let from = nodes[nearest].pos;
        let d = from.dist(target);
        let new = if d <= params.step { target } else { from.lerp(target, params.step / d) };
        if d == 0.0 || !collision_check(map, from, new, step) {
            history.push(best_of(&nodes, &goal_nodes).0);
            continue;
        }
        let n = (nodes.len() + 1) as f64;
        let radius = (params.rewire_gamma * (n.ln() / n).sqrt()).min(params.rewire_max);
        near.clear();
        near.extend(
            nodes
                .iter()
                .enumerate()
                .filter(|(_, nd)| nd.pos.dist(new) <= radius)
                .map(|(i, _)| i),
        );
        let mut parent = nearest;
        let mut cost = nodes[nearest].cost + from.dist(new);
        for &i in &near {
            let c = nodes[i].cost + nodes[i].pos.dist(new);
            if c < cost && i != nearest && collision_check(map, nodes[i].pos, new, step) {
                parent = i;
                cost = c;
            }
        }
        let id = nodes.len();
        nodes.push(TreeNode {
            pos: new,
            parent: Some(parent),
            cost,
            children: Vec::new(),
        });
        nodes[parent].children.push(id);

        for &i in &near {
            if i == parent {
                continue;
            }
            let c = cost + new.dist(nodes[i].pos);
            if c < nodes[i].cost && collision_check(map, new, nodes[i].pos, step) {
                let delta = nodes[i].cost - c;
                if let Some(old) = nodes[i].parent {
                    nodes[old].children.retain(|&k| k != i);
                }
                nodes[i].parent = Some(id);
                nodes[id].children.push(i);
                nodes[i].cost = c;
                let mut stack = nodes[i].children.clone();
                while let Some(k) = stack.pop() {
                    nodes[k].cost -= delta;
                    stack.extend_from_slice(&nodes[k].children);
                }
            }
        }
        if new.dist(goal) <= params.goal_tolerance && collision_check(map, new, goal, step) {
            goal_nodes.push(id);
        }
        history.push(best_of(&nodes, &goal_nodes).0);
    }
    let (cost, best) = best_of(&nodes, &goal_nodes);
    let polyline = match best {
        None => Vec::new(),
        Some(g) => {
            let mut chain = vec![nodes[g].pos];
            let mut cur = g;
            while let Some(p) = nodes[cur].parent {
                chain.push(nodes[p].pos);
                cur = p;
            }
            chain.reverse();
            if *chain.last().expect("nonempty") != goal {
                chain.push(goal);
            }
            chain
        }
    };
    RrtStarOutput {
        polyline,
        cost,
        history,
    }
}

#[derive(Clone, Copy)]
struct HeapItem(f64, usize);

impl PartialEq for HeapItem {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for HeapItem {}
impl Ord for HeapItem {
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.total_cmp(&self.0).then(other.1.cmp(&self.1))
    }
}
impl PartialOrd for HeapItem {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

fn k_nearest(points: &[Point2], query: Point2, k: usize, skip: Option<usize>) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..points.len()).filter(|&i| Some(i) != skip).collect();
    let key = |i: &usize| (points[*i].dist(query), *i);
    if idx.len() > k {
        idx.select_nth_unstable_by(k, |a, b| {
            let (da, ia) = key(a);
            let (db, ib) = key(b);
            da.total_cmp(&db).then(ia.cmp(&ib))
        });
        idx.truncate(k);
    }
    idx.sort_by(|a, b| {
        let (da, ia) = key(a);
        let (db, ib) = key(b);
        da.total_cmp(&db).then(ia.cmp(&ib))
    });
    idx
}

/// Probabilistic roadmap: rejection-sampled free points joined to their k
/// nearest neighbours by collision-free edges, queried with Dijkstra.
pub fn prm(map: &Costmap, start: Point2, goal: Point2, params: &PrmParams, step: f64, seed: u64) -> Option<Vec<Point2>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pts: Vec<Point2> = Vec::with_capacity(params.sample_count + 2);
    let max_attempts = params.sample_count.saturating_mul(100).max(1000);
    let mut attempts = 0;
    while pts.len() < params.sample_count && attempts < max_attempts {
        attempts += 1;
        let p = sample_in_bounds(map, &mut rng);
        if map.is_free_point(p) {
            pts.push(p);
        }
    }
    let samples = pts.len();
    let mut adj: Vec<Vec<(usize, f64)>> = vec![Vec::new(); samples + 2];
    let add_edge = |adj: &mut Vec<Vec<(usize, f64)>>, a: usize, b: usize, w: f64| {
        if !adj[a].iter().any(|&(j, _)| j == b) {
            adj[a].push((b, w));
            adj[b].push((a, w));
        }
    };
    for i in 0..samples {
        for j in k_nearest(&pts[..samples], pts[i], params.k_neighbors, Some(i)) {
            if !adj[i].iter().any(|&(x, _)| x == j) && collision_check(map, pts[i], pts[j], step) {
                add_edge(&mut adj, i, j, pts[i].dist(pts[j]));
            }
        }
    }
    let (s, g) = (samples, samples + 1);
    pts.push(start);
    pts.push(goal);
    for (node, p) in [(s, start), (g, goal)] {
        for j in k_nearest(&pts[..samples], p, params.k_neighbors, None) {
            if collision_check(map, p, pts[j], step) {
                add_edge(&mut adj, node, j, p.dist(pts[j]));
            }
        }
    }
    if start == goal {
        return Some(vec![start]);
    }

    let mut dist = vec![f64::INFINITY; pts.len()];
    let mut prev = vec![usize::MAX; pts.len()];
    let mut heap = BinaryHeap::new();
    dist[s] = 0.0;
    heap.push(HeapItem(0.0, s));
    while let Some(HeapItem(d, u)) = heap.pop() {
        if d > dist[u] {
            continue;
        }
        if u == g {
            break;
        }
        for &(v, w) in &adj[u] {
            if d + w < dist[v] {
                dist[v] = d + w;
                prev[v] = u;
                heap.push(HeapItem(dist[v], v));
            }
        }
    }
    if !dist[g].is_finite() {
        return None;
    }
    let mut chain = vec![goal];
    let mut cur = g;
    while prev[cur] != usize::MAX {
        cur = prev[cur];
        chain.push(pts[cur]);
    }
    chain.reverse();
    Some(chain)
}

/// Greedy shortcutting: from each kept vertex jump to the farthest later
/// vertex reachable by a collision-free segment.
pub fn shortcut(map: &Costmap, pts: &[Point2], step: f64) -> Vec<Point2> {
    if pts.len() <= 2 {
        return pts.to_vec();
    }
    let mut out = vec![pts[0]];
    let mut i = 0;
    while i < pts.len() - 1 {
        let mut j = pts.len() - 1;
        while j > i + 1 && !collision_check(map, pts[i], pts[j], step) {
            j -= 1;
        }
        out.push(pts[j]);
        i = j;
    }
    out
}

/// Cells visited by a polyline, sampled at no more than half a cell, with
/// loops cut out and staircase corners removed so that consecutive cells
/// stay 8-adjacent.
pub fn rasterize_polyline(map: &Costmap, pts: &[Point2], step: f64) -> Vec<Cell> {
    let spacing = step.min(map.resolution() / 2.0);
    let mut out: Vec<Cell> = Vec::new();
    let mut index: HashMap<Cell, usize> = HashMap::new();
    let push = |c: Cell, out: &mut Vec<Cell>, index: &mut HashMap<Cell, usize>| {
        if out.last() == Some(&c) {
            return;
        }
        if let Some(&k) = index.get(&c) {
            for dropped in out.drain(k + 1..) {
                index.remove(&dropped);
            }
            return;
        }
        while out.len() >= 2 && adjacent8(out[out.len() - 2], c) {
            let dropped = out.pop().expect("len >= 2");
            index.remove(&dropped);
        }
        index.insert(c, out.len());
        out.push(c);
    };
    let visit = |p: Point2, out: &mut Vec<Cell>, index: &mut HashMap<Cell, usize>| {
        if let Some(c) = map.cell_of(p) {
            push(c, out, index);
        }
    };
    if let Some(&p0) = pts.first() {
        visit(p0, &mut out, &mut index);
    }
    for w in pts.windows(2) {
        let n = (w[0].dist(w[1]) / spacing).ceil().max(1.0) as usize;
        for k in 1..=n {
            visit(w[0].lerp(w[1], k as f64 / n as f64), &mut out, &mut index);
        }
    }
    out
}
