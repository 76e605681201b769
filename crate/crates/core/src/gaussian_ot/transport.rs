//! Exact solver for the discrete transportation problem.
//!
//! Primal transportation simplex on the bipartite spanning-tree basis:
//! north-west corner start, potentials by tree traversal, Bland's rule for
//! both the entering and the leaving cell so degenerate pivots cannot cycle
//! and ties resolve identically on every run.
//!
//! Forbidden cells (infinite cost) are handled lexicographically: the solver
//! first minimises the mass routed through forbidden cells and only then the
//! finite cost, so no big-M constant pollutes the duals.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Marginal totals may disagree by this much before the problem is rejected.
pub const MARGINAL_TOL: f64 = 1e-8;

/// Nonnegative `rows × cols` mass matrix, stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coupling {
    rows: usize,
    cols: usize,
    mass: Vec<f64>,
}

impl Coupling {
    pub fn new(rows: usize, cols: usize, mass: Vec<f64>) -> Result<Self> {
        if mass.len() != rows * cols {
            return Err(Error::Argument(format!(
                "coupling of shape {rows}x{cols} needs {} entries, got {}",
                rows * cols,
                mass.len()
            )));
        }
        if mass.iter().any(|m| !m.is_finite() || *m < 0.0) {
            return Err(Error::Argument("coupling entries must be finite and nonnegative".into()));
        }
        Ok(Self { rows, cols, mass })
    }

    /// The independent coupling `a ⊗ b`.
    pub fn product(a: &[f64], b: &[f64]) -> Self {
        let mass = a.iter().flat_map(|x| b.iter().map(move |y| x * y)).collect();
        Self { rows: a.len(), cols: b.len(), mass }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.mass[i * self.cols + j]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.mass
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.mass[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.rows).map(|i| self.row(i).iter().sum()).collect()
    }

    pub fn col_sums(&self) -> Vec<f64> {
        (0..self.cols)
            .map(|j| (0..self.rows).map(|i| self.get(i, j)).sum())
            .collect()
    }

    /// `Σ cost(i,j) · mass(i,j)` over cells with nonzero mass.
    pub fn weighted_sum(&self, cost: &[f64]) -> f64 {
        self.mass
            .iter()
            .zip(cost)
            .filter(|(m, _)| **m > 0.0)
            .map(|(m, c)| m * c)
            .sum()
    }

    /// Largest deviation of the marginals from `a` and `b`.
    pub fn marginal_error(&self, a: &[f64], b: &[f64]) -> f64 {
        let r = self.row_sums().iter().zip(a).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        let c = self.col_sums().iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        r.max(c)
    }
}

/// Result of [`solve_transport`].
#[derive(Debug, Clone, PartialEq)]
pub struct TransportSolution {
    pub coupling: Coupling,
    /// `Σ c·x` over finite-cost cells.
    pub objective: f64,
    /// Mass the solver could not keep off forbidden (infinite-cost) cells.
    pub forbidden_mass: f64,
    pub pivots: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Lex {
    forbidden: f64,
    cost: f64,
}

impl Lex {
    const ZERO: Lex = Lex { forbidden: 0.0, cost: 0.0 };

    fn of(c: f64) -> Self {
        if c.is_finite() {
            Lex { forbidden: 0.0, cost: c }
        } else {
            Lex { forbidden: 1.0, cost: 0.0 }
        }
    }

    fn sub(self, o: Lex) -> Lex {
        Lex { forbidden: self.forbidden - o.forbidden, cost: self.cost - o.cost }
    }

    fn add(self, o: Lex) -> Lex {
        Lex { forbidden: self.forbidden + o.forbidden, cost: self.cost + o.cost }
    }

    fn is_negative(self, tol: f64) -> bool {
        self.forbidden < -0.5 || (self.forbidden.abs() < 0.5 && self.cost < -tol)
    }
}

/// Minimises `Σ cost[i·n+j] · x[i][j]` subject to row sums `supply`,
/// column sums `demand` and `x ≥ 0`.
///
/// `cost` entries may be `+∞` to forbid a cell; check
/// [`TransportSolution::forbidden_mass`] afterwards.
pub fn solve_transport(cost: &[f64], supply: &[f64], demand: &[f64]) -> Result<TransportSolution> {
    let (m, n) = (supply.len(), demand.len());
    if m == 0 || n == 0 {
        return Err(Error::Argument("transport problem needs at least one row and column".into()));
    }
    if cost.len() != m * n {
        return Err(Error::Argument(format!(
            "cost matrix has {} entries, expected {m}x{n}",
            cost.len()
        )));
    }
    if cost.iter().any(|c| c.is_nan() || *c == f64::NEG_INFINITY) {
        return Err(Error::Argument("cost entries must be finite or +inf".into()));
    }
    if supply.iter().chain(demand).any(|w| !w.is_finite() || *w < 0.0) {
        return Err(Error::Argument("marginals must be finite and nonnegative".into()));
    }
    let total_s: f64 = supply.iter().sum();
    let total_d: f64 = demand.iter().sum();
    if (total_s - total_d).abs() > MARGINAL_TOL * total_s.max(1.0) {
        return Err(Error::Argument(format!(
            "marginal totals differ: {total_s} vs {total_d}"
        )));
    }
    let scale = if total_d > 0.0 { total_s / total_d } else { 1.0 };
    let demand: Vec<f64> = demand.iter().map(|d| d * scale).collect();

    let lex: Vec<Lex> = cost.iter().map(|&c| Lex::of(c)).collect();
    let max_abs = cost.iter().filter(|c| c.is_finite()).fold(0.0f64, |a, c| a.max(c.abs()));
    let tol = 1e-12 * max_abs;
    let mass_tol = 1e-15 * total_s.max(1.0);

    let mut flow = vec![0.0; m * n];
    let mut basic = vec![false; m * n];
    north_west_corner(supply, &demand, &mut flow, &mut basic);

    let max_pivots = 50 * (m + n) * (m + n) + 1000;
    let mut pivots = 0;
    loop {
        let (u, v) = potentials(m, n, &basic, &lex);
        let entering = (0..m * n).find(|&k| {
            !basic[k] && lex[k].sub(u[k / n].add(v[k % n])).is_negative(tol)
        });
        let Some(enter) = entering else { break };
        if pivots >= max_pivots {
            return Err(Error::Solver {
                iterations: pivots,
                reason: format!("pivot limit reached with entering cell {enter}"),
            });
        }
        let cycle = cycle_through(m, n, &basic, enter);
        // cycle[0] is the entering cell (+); afterwards signs alternate starting with −
        let theta = cycle
            .iter()
            .skip(1)
            .step_by(2)
            .map(|&k| flow[k])
            .fold(f64::INFINITY, f64::min);
        let leave = cycle
            .iter()
            .skip(1)
            .step_by(2)
            .copied()
            .filter(|&k| flow[k] <= theta + mass_tol)
            .min()
            .ok_or_else(|| Error::Solver {
                iterations: pivots,
                reason: "degenerate cycle without a leaving cell".into(),
            })?;
        for (pos, &k) in cycle.iter().enumerate() {
            if pos % 2 == 0 {
                flow[k] += theta;
            } else {
                flow[k] = (flow[k] - theta).max(0.0);
            }
        }
        flow[leave] = 0.0;
        basic[enter] = true;
        basic[leave] = false;
        pivots += 1;
    }

    let mut objective = 0.0;
    let mut forbidden_mass = 0.0;
    for (k, &x) in flow.iter().enumerate() {
        if x > 0.0 {
            if cost[k].is_finite() {
                objective += x * cost[k];
            } else {
                forbidden_mass += x;
            }
        }
    }
    Ok(TransportSolution {
        coupling: Coupling { rows: m, cols: n, mass: flow },
        objective,
        forbidden_mass,
        pivots,
    })
}

fn north_west_corner(supply: &[f64], demand: &[f64], flow: &mut [f64], basic: &mut [bool]) {
    let (m, n) = (supply.len(), demand.len());
    let mut s = supply.to_vec();
    let mut d = demand.to_vec();
    let (mut i, mut j) = (0, 0);
    loop {
        let x = s[i].min(d[j]);
        flow[i * n + j] = x;
        basic[i * n + j] = true;
        s[i] -= x;
        d[j] -= x;
        if i == m - 1 && j == n - 1 {
            // absorb rounding left over from the marginals
            flow[i * n + j] += s[i].max(d[j]).max(0.0);
            break;
        }
        if i == m - 1 {
            j += 1;
        } else if j == n - 1 || s[i] <= d[j] {
            i += 1;
        } else {
            j += 1;
        }
    }
}

/// Tree adjacency: nodes `0..m` are rows, `m..m+n` columns.
fn tree_adjacency(m: usize, n: usize, basic: &[bool]) -> Vec<Vec<(usize, usize)>> {
    let mut adj = vec![Vec::new(); m + n];
    for (k, _) in basic.iter().enumerate().filter(|(_, b)| **b) {
        let (i, j) = (k / n, k % n);
        adj[i].push((m + j, k));
        adj[m + j].push((i, k));
    }
    adj
}

fn potentials(m: usize, n: usize, basic: &[bool], lex: &[Lex]) -> (Vec<Lex>, Vec<Lex>) {
    let adj = tree_adjacency(m, n, basic);
    let mut pot = vec![None; m + n];
    let mut queue = VecDeque::new();
    pot[0] = Some(Lex::ZERO);
    queue.push_back(0);
    while let Some(node) = queue.pop_front() {
        let p = pot[node].expect("visited node has a potential");
        for &(next, k) in &adj[node] {
            if pot[next].is_none() {
                pot[next] = Some(lex[k].sub(p));
                queue.push_back(next);
            }
        }
    }
    let pot: Vec<Lex> = pot.into_iter().map(|p| p.unwrap_or(Lex::ZERO)).collect();
    (pot[..m].to_vec(), pot[m..].to_vec())
}

/// Cells of the unique cycle closed by adding `enter` to the basis tree,
/// starting with `enter` itself.
fn cycle_through(m: usize, n: usize, basic: &[bool], enter: usize) -> Vec<usize> {
    let adj = tree_adjacency(m, n, basic);
    let (row, col) = (enter / n, m + enter % n);
    let mut parent: Vec<Option<(usize, usize)>> = vec![None; m + n];
    let mut seen = vec![false; m + n];
    seen[row] = true;
    let mut queue = VecDeque::from([row]);
    while let Some(node) = queue.pop_front() {
        if node == col {
            break;
        }
        for &(next, k) in &adj[node] {
            if !seen[next] {
                seen[next] = true;
                parent[next] = Some((node, k));
                queue.push_back(next);
            }
        }
    }
    let mut cycle = vec![enter];
    let mut node = col;
    while node != row {
        let (prev, k) = parent[node].expect("basis is a spanning tree");
        cycle.push(k);
        node = prev;
    }
    cycle
}
