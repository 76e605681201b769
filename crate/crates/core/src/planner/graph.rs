use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian_ot::{interpolate, w2, Gaussian2, Gmm};
use crate::workspace::{p_obstacle, Workspace};

/// Fixed probe points checked on every edge besides the densification points.
pub const EDGE_PROBES: [f64; 3] = [0.25, 0.5, 0.75];

/// How candidate edges within `d_th` are admitted and priced.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EdgeRule {
    /// Cost `W2`; the edge is dropped if any probe or densification
    /// interpolant has `p_B ≥ eta_b`.
    Safe { eta_b: f64, max_step: f64 },
    /// Cost `W2² + lambda_p · p_B(midpoint)` (km²), nothing dropped.
    Penalized { lambda_p: f64 },
}

/// Undirected graph over collocation, start and goal components, in that order.
#[derive(Debug, Clone, PartialEq)]
pub struct GcGraph {
    nodes: Vec<Gaussian2>,
    n_collocation: usize,
    n_start: usize,
    n_goal: usize,
    edges: Vec<Edge>,
    adjacency: Vec<Vec<(usize, f64)>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub a: usize,
    pub b: usize,
    /// km.
    pub cost: f64,
}

impl GcGraph {
    pub fn nodes(&self) -> &[Gaussian2] {
        &self.nodes
    }

    pub fn node(&self, i: usize) -> &Gaussian2 {
        &self.nodes[i]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn n_collocation(&self) -> usize {
        self.n_collocation
    }

    pub fn n_start(&self) -> usize {
        self.n_start
    }

    pub fn n_goal(&self) -> usize {
        self.n_goal
    }

    pub fn start_node(&self, i: usize) -> usize {
        self.n_collocation + i
    }

    pub fn goal_node(&self, j: usize) -> usize {
        self.n_collocation + self.n_start + j
    }

    /// Edges with `a < b`, sorted.
    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    /// `(neighbour, cost)` pairs sorted by neighbour.
    pub fn neighbours(&self, i: usize) -> &[(usize, f64)] {
        &self.adjacency[i]
    }
}

fn edge_is_safe(g1: &Gaussian2, g2: &Gaussian2, d: f64, eta_b: f64, max_step: f64, w: &Workspace) -> bool {
    let m = segments(d, max_step);
    let probes = EDGE_PROBES.iter().copied().chain((1..m).map(|k| k as f64 / m as f64));
    for tau in probes {
        match interpolate(g1, g2, tau) {
            Ok(g) if p_obstacle(&g, w) < eta_b => {}
            _ => return false,
        }
    }
    true
}

/// Number of equal geodesic segments of length at most `max_step`.
pub(crate) fn segments(d: f64, max_step: f64) -> usize {
    ((d / max_step).ceil() as usize).max(1)
}

/// Builds the component graph with an edge for every pair within `d_th`
/// that `rule` admits.
pub fn build_graph(
    collocation: &[Gaussian2],
    p0: &Gmm,
    pf: &Gmm,
    d_th: f64,
    w: &Workspace,
    rule: EdgeRule,
) -> Result<GcGraph> {
    if !(d_th >= 0.0) {
        return Err(Error::Argument(format!("d_th = {d_th} must be nonnegative")));
    }
    if let EdgeRule::Safe { eta_b, max_step } = rule {
        if !(max_step > 0.0) {
            return Err(Error::Argument(format!("max_step = {max_step} must be positive")));
        }
        for (name, p) in [("start", p0), ("goal", pf)] {
            for (i, g) in p.components().iter().enumerate() {
                let pb = p_obstacle(g, w);
                if pb >= eta_b {
                    return Err(Error::Validation(format!(
                        "{name} component {i} has obstacle penalty {pb:.4} ≥ {eta_b}"
                    )));
                }
            }
        }
    }
    let nodes: Vec<Gaussian2> = collocation
        .iter()
        .chain(p0.components())
        .chain(pf.components())
        .copied()
        .collect();
    let n = nodes.len();
    let edges: Vec<Edge> = (0..n)
        .into_par_iter()
        .flat_map_iter(|a| {
            let nodes = &nodes;
            (a + 1..n).filter_map(move |b| {
                let (ga, gb) = (&nodes[a], &nodes[b]);
                // W2 is at least the mean distance
                if (ga.mean() - gb.mean()).norm() > d_th {
                    return None;
                }
                let d = w2(ga, gb);
                if d > d_th {
                    return None;
                }
                let cost = match rule {
                    EdgeRule::Safe { eta_b, max_step } => {
                        edge_is_safe(ga, gb, d, eta_b, max_step, w).then_some(d)?
                    }
                    EdgeRule::Penalized { lambda_p } => {
                        let mid = interpolate(ga, gb, 0.5).ok()?;
                        d * d + lambda_p * p_obstacle(&mid, w)
                    }
                };
                Some(Edge { a, b, cost })
            })
        })
        .collect();
    let mut adjacency = vec![Vec::new(); n];
    for e in &edges {
        adjacency[e.a].push((e.b, e.cost));
        adjacency[e.b].push((e.a, e.cost));
    }
    for adj in &mut adjacency {
        adj.sort_by_key(|&(v, _)| v);
    }
    Ok(GcGraph {
        nodes,
        n_collocation: collocation.len(),
        n_start: p0.len(),
        n_goal: pf.len(),
        edges,
        adjacency,
    })
}

#[derive(Clone, Copy, PartialEq)]
struct Entry {
    dist: f64,
    node: usize,
}

impl Eq for Entry {}

impl Ord for Entry {
    // reversed so the max-heap pops the smallest (dist, node)
    fn cmp(&self, other: &Self) -> Ordering {
        other.dist.total_cmp(&self.dist).then(other.node.cmp(&self.node))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Single-source shortest-path tree: distances and predecessors.
pub struct ShortestTree {
    src: usize,
    dist: Vec<f64>,
    pred: Vec<usize>,
}

impl ShortestTree {
    pub fn distance(&self, dst: usize) -> f64 {
        self.dist[dst]
    }

    pub fn path(&self, dst: usize) -> Result<Vec<usize>> {
        if !self.dist[dst].is_finite() {
            return Err(Error::NoPath { src: self.src, dst });
        }
        let mut path = vec![dst];
        let mut v = dst;
        while v != self.src {
            v = self.pred[v];
            path.push(v);
        }
        path.reverse();
        Ok(path)
    }
}

/// Dijkstra from `src`. Among equal-cost routes the predecessor with the
/// smaller index wins.
pub fn shortest_tree(graph: &GcGraph, src: usize) -> Result<ShortestTree> {
    let n = graph.len();
    if src >= n {
        return Err(Error::Argument(format!("source node {src} out of range ({n} nodes)")));
    }
    let mut dist = vec![f64::INFINITY; n];
    let mut pred = vec![usize::MAX; n];
    let mut done = vec![false; n];
    let mut heap = BinaryHeap::new();
    dist[src] = 0.0;
    heap.push(Entry { dist: 0.0, node: src });
    while let Some(Entry { dist: d, node: u }) = heap.pop() {
        if done[u] {
            continue;
        }
        done[u] = true;
        for &(v, c) in graph.neighbours(u) {
            if done[v] {
                continue;
            }
            let nd = d + c;
            if nd < dist[v] {
                dist[v] = nd;
                pred[v] = u;
                heap.push(Entry { dist: nd, node: v });
            } else if nd == dist[v] && u < pred[v] {
                pred[v] = u;
            }
        }
    }
    Ok(ShortestTree { src, dist, pred })
}

/// Minimal-cost node sequence from `src` to `dst` and its cost.
pub fn shortest_gc_path(graph: &GcGraph, src: usize, dst: usize) -> Result<(Vec<usize>, f64)> {
    if dst >= graph.len() {
        return Err(Error::Argument(format!("target node {dst} out of range")));
    }
    let tree = shortest_tree(graph, src)?;
    Ok((tree.path(dst)?, tree.distance(dst)))
}

/// A time-indexed component trajectory for one start/goal pair.
#[derive(Debug, Clone, PartialEq)]
pub struct GcTrajectory {
    pub source: usize,
    pub target: usize,
    /// Graph nodes visited.
    pub nodes: Vec<usize>,
    /// One component per time step, first the start and last the goal.
    pub gcs: Vec<Gaussian2>,
    /// Sum of step W2 distances (km).
    pub cost: f64,
    /// Sum of squared step W2 distances (km²).
    pub energy: f64,
}

impl GcTrajectory {
    pub fn steps(&self) -> usize {
        self.gcs.len() - 1
    }

    /// Component at step `k`, holding the last one beyond the end.
    pub fn at(&self, k: usize) -> &Gaussian2 {
        &self.gcs[k.min(self.gcs.len() - 1)]
    }

    pub fn step_lengths(&self) -> Vec<f64> {
        self.gcs.windows(2).map(|p| w2(&p[0], &p[1])).collect()
    }
}

/// Replaces every edge of `path` by `⌈d / max_step⌉` equal geodesic steps.
///
/// Interpolants are always evaluated from the lower-indexed endpoint so they
/// coincide bit for bit with the ones probed during edge admission.
pub fn densify_path(graph: &GcGraph, path: &[usize], max_step: f64) -> Result<GcTrajectory> {
    if path.is_empty() {
        return Err(Error::Argument("empty path".into()));
    }
    if !(max_step > 0.0) {
        return Err(Error::Argument(format!("max_step = {max_step} must be positive")));
    }
    let mut gcs = vec![*graph.node(path[0])];
    for pair in path.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        let (lo, hi) = (a.min(b), a.max(b));
        let (glo, ghi) = (graph.node(lo), graph.node(hi));
        let m = segments(w2(glo, ghi), max_step);
        for k in 1..m {
            let from_lo = if a == lo { k } else { m - k };
            gcs.push(interpolate(glo, ghi, from_lo as f64 / m as f64)?);
        }
        gcs.push(*graph.node(b));
    }
    let steps: Vec<f64> = gcs.windows(2).map(|p| w2(&p[0], &p[1])).collect();
    Ok(GcTrajectory {
        source: path[0],
        target: *path.last().unwrap(),
        nodes: path.to_vec(),
        cost: steps.iter().sum(),
        energy: steps.iter().map(|s| s * s).sum(),
        gcs,
    })
}
