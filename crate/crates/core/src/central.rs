//! Centralized reference solver for the cooperative allocation problem,
//! plus feasibility checking and restoration.
//!
//! Feasible set: every row `j` places exactly `lambda_j` (fog entries plus
//! the cloud entry, all nonnegative, forbidden pairs zero), and every fog
//! column `i` carries at most `c_i = min(chi_i, (1 - eps) mu_i)`.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{FogError, Result};
use crate::model::{coop_gradient, coop_objective, Allocation, Scenario};
use crate::pgd::{self, PgOptions, PgProblem};
use crate::projection::project_simplex;
use crate::trace::{IterRecord, SolveTrace};

pub const FEASIBILITY_TOL: f64 = 1e-6;
const PROJECTION_TOL: f64 = 1e-9;
const PROJECTION_MAX_ITERS: usize = 500;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityReport {
    /// `sum_k phi_jk + phi_jc - lambda_j`
    pub row_residuals: Vec<f64>,
    /// `c_i - sum_k phi_ki`
    pub column_slacks: Vec<f64>,
    /// Negative entries plus nonzero entries on forbidden pairs.
    pub bound_violations: usize,
    pub feasible: bool,
}

pub fn check_feasibility(a: &Allocation, s: &Scenario) -> FeasibilityReport {
    let n = s.len();
    let row_residuals: Vec<f64> = (0..n)
        .map(|j| a.row_total(j) - s.node(j).arrival_rate())
        .collect();
    let column_slacks: Vec<f64> = (0..n)
        .map(|i| s.node(i).effective_capacity() - a.column_load(i))
        .collect();
    let mut bound_violations = 0;
    for j in 0..n {
        for i in 0..n {
            let v = a.get(j, i);
            if v < -FEASIBILITY_TOL || (!s.may_forward(j, i) && v != 0.0) {
                bound_violations += 1;
            }
        }
        if a.cloud(j) < -FEASIBILITY_TOL {
            bound_violations += 1;
        }
    }
    let feasible = row_residuals.iter().all(|r| r.abs() <= FEASIBILITY_TOL)
        && column_slacks.iter().all(|c| *c >= -FEASIBILITY_TOL)
        && bound_violations == 0;
    FeasibilityReport {
        row_residuals,
        column_slacks,
        bound_violations,
        feasible,
    }
}

/// Precomputed index sets for projecting flat allocations.
struct FeasibleSet {
    n: usize,
    lambda: Vec<f64>,
    caps: Vec<f64>,
    /// Per row, the flat indices of its allowed fog entries followed by its cloud entry.
    rows: Vec<Vec<usize>>,
    /// Per fog column, the flat indices of its allowed entries.
    cols: Vec<Vec<usize>>,
    forbidden: Vec<usize>,
}

impl FeasibleSet {
    fn new(s: &Scenario) -> Self {
        let n = s.len();
        let mut rows = vec![Vec::new(); n];
        let mut cols = vec![Vec::new(); n];
        let mut forbidden = Vec::new();
        for j in 0..n {
            for i in 0..n {
                if s.may_forward(j, i) {
                    rows[j].push(j * n + i);
                    cols[i].push(j * n + i);
                } else {
                    forbidden.push(j * n + i);
                }
            }
            rows[j].push(n * n + j);
        }
        Self {
            n,
            lambda: s.arrival_rates(),
            caps: s.capacities(),
            rows,
            cols,
            forbidden,
        }
    }

    /// Row-wise simplex projection of `v` with each fog column shifted down
    /// by its multiplier.
    fn rows_at(&self, v: &[f64], nu: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut x = vec![0.0; v.len()];
        for (j, idx) in self.rows.iter().enumerate() {
            let w: Vec<f64> = idx
                .iter()
                .map(|&k| if k < n * n { v[k] - nu[k % n] } else { v[k] })
                .collect();
            for (&k, p) in idx.iter().zip(project_simplex(&w, self.lambda[j])) {
                x[k] = p;
            }
        }
        x
    }

    fn column_excess(&self, x: &[f64]) -> Vec<f64> {
        self.cols
            .iter()
            .zip(&self.caps)
            .map(|(idx, c)| idx.iter().map(|&k| x[k]).sum::<f64>() - c)
            .collect()
    }

    /// Generalized Hessian of the dual: on each row's positive entries the
    /// projection moves every fog entry by `-1 + 1/|active|` per unit of
    /// its own multiplier and `1/|active|` per unit of the others'.
    fn dual_hessian(&self, x: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut h = vec![0.0; n * n];
        for idx in &self.rows {
            let active: Vec<usize> = idx.iter().copied().filter(|&k| x[k] > 0.0).collect();
            let share = 1.0 / active.len().max(1) as f64;
            let fog: Vec<usize> = active.iter().filter(|&&k| k < n * n).map(|&k| k % n).collect();
            for &i in &fog {
                h[i * n + i] -= 1.0;
                for &m in &fog {
                    h[i * n + m] += share;
                }
            }
        }
        h
    }

    /// Euclidean projection onto the feasible set. The column caps are
    /// dualized; for fixed multipliers the rows decouple into simplex
    /// projections, and the multipliers come from semismooth Newton steps
    /// on the dual, with the dual gradient as the fallback direction.
    fn project(&self, v: &[f64]) -> Vec<f64> {
        let n = self.n;
        let tol = PROJECTION_TOL * self.caps.iter().fold(1.0f64, |m, c| m.max(*c));
        let residual = |nu: &[f64], r: &[f64]| -> f64 {
            nu.iter().zip(r).map(|(a, b)| (a - (a + b).max(0.0)).abs()).fold(0.0, f64::max)
        };
        let mut nu = vec![0.0; n];
        let mut x = self.rows_at(v, &nu);
        let mut r = self.column_excess(&x);
        let mut res = residual(&nu, &r);
        for _ in 0..PROJECTION_MAX_ITERS {
            if res <= tol {
                break;
            }
            let h = self.dual_hessian(&x);
            let mut d: Vec<f64> = (0..n).map(|i| -nu[i]).collect();
            // an empty column has no curvature; step its multiplier by the
            // residual itself
            for i in 0..n {
                if nu[i] + r[i] > 0.0 && h[i * n + i] == 0.0 {
                    d[i] = r[i];
                }
            }
            let free: Vec<usize> = (0..n).filter(|&i| nu[i] + r[i] > 0.0 && h[i * n + i] != 0.0).collect();
            for &i in &free {
                d[i] = 0.0;
            }
            let m = free.len();
            let mut a = vec![0.0; m * m];
            let mut b = vec![0.0; m];
            for (p, &i) in free.iter().enumerate() {
                for (q, &k) in free.iter().enumerate() {
                    a[p * m + q] = h[i * n + k];
                }
                a[p * m + p] -= 1e-10;
                b[p] = -r[i] - (0..n).map(|k| h[i * n + k] * d[k]).sum::<f64>();
            }
            if let Some(sol) = solve_dense(&mut a, &mut b) {
                for (p, &i) in free.iter().enumerate() {
                    d[i] = sol[p];
                }
            }
            let mut moved = false;
            for dir in [d, r.clone()] {
                if let Some((cand, xc, rc)) = self.dual_line_search(v, &nu, &x, &r, &dir, &residual) {
                    res = residual(&cand, &rc);
                    (nu, x, r) = (cand, xc, rc);
                    moved = true;
                    break;
                }
            }
            if !moved {
                break;
            }
        }
        for &k in &self.forbidden {
            x[k] = 0.0;
        }
        self.settle_caps(&mut x);
        x
    }

    /// Dual objective up to a constant: `min_x 1/2 |x - v|^2 + nu . excess(x)`
    /// evaluated at the row projection `x` for `nu`, without the `|v|^2`
    /// term so that large inputs keep their precision.
    fn dual_value(v: &[f64], x: &[f64], nu: &[f64], r: &[f64]) -> f64 {
        let quad: f64 = x.iter().zip(v).map(|(a, b)| 0.5 * a * a - a * b).sum();
        quad + nu.iter().zip(r).map(|(a, b)| a * b).sum::<f64>()
    }

    /// Ascent along `nu + t dir` clipped at zero: halve from `t = 1` until
    /// the dual improves, then keep doubling while it still does. The dual
    /// is piecewise quadratic with flat stretches where a row has a single
    /// active entry, so the doubling matters.
    #[allow(clippy::type_complexity)]
    fn dual_line_search(
        &self,
        v: &[f64],
        nu: &[f64],
        x: &[f64],
        r: &[f64],
        dir: &[f64],
        res: &dyn Fn(&[f64], &[f64]) -> f64,
    ) -> Option<(Vec<f64>, Vec<f64>, Vec<f64>)> {
        let base = Self::dual_value(v, x, nu, r);
        let base_res = res(nu, r);
        let at = |t: f64| {
            let cand: Vec<f64> = nu.iter().zip(dir).map(|(a, b)| (a + t * b).max(0.0)).collect();
            let xc = self.rows_at(v, &cand);
            let rc = self.column_excess(&xc);
            let g = Self::dual_value(v, &xc, &cand, &rc);
            (g, cand, xc, rc)
        };
        // near the solution the dual gain drops below rounding; a step that
        // keeps the dual and shrinks the complementarity residual also counts
        let improves = |g: f64, cand: &[f64], rc: &[f64]| {
            g > base + 1e-13 * (1.0 + base.abs()) || (g >= base && res(cand, rc) < base_res)
        };
        let mut t = 1.0;
        let mut best = None;
        for _ in 0..60 {
            let trial = at(t);
            if improves(trial.0, &trial.1, &trial.3) {
                best = Some(trial);
                break;
            }
            t *= 0.5;
        }
        let mut best = best?;
        if t == 1.0 {
            for _ in 0..60 {
                t *= 2.0;
                let trial = at(t);
                if trial.0 <= best.0 {
                    break;
                }
                best = trial;
            }
        }
        Some((best.1, best.2, best.3))
    }

    /// Shave any rounding-level overload off the fog columns into the
    /// senders' cloud entries.
    fn settle_caps(&self, x: &mut [f64]) {
        let n = self.n;
        for (i, idx) in self.cols.iter().enumerate() {
            let load: f64 = idx.iter().map(|&k| x[k]).sum();
            if load > self.caps[i] {
                let keep = self.caps[i] / load;
                for &k in idx {
                    let shed = x[k] * (1.0 - keep);
                    x[k] -= shed;
                    x[n * n + k / n] += shed;
                }
            }
        }
    }
}

/// Nearest allocation satisfying row conservation, column capacity and the
/// cooperation mask.
pub fn project_feasible(a: &Allocation, s: &Scenario) -> Allocation {
    let set = FeasibleSet::new(s);
    Allocation::from_flat(s.len(), &set.project(&a.to_flat()))
}

/// Solve `a x = b` in place by Gaussian elimination with partial pivoting;
/// `a` is row-major and square. `None` if it is numerically singular.
fn solve_dense(a: &mut [f64], b: &mut [f64]) -> Option<Vec<f64>> {
    let m = b.len();
    for c in 0..m {
        let p = (c..m).max_by(|&x, &y| a[x * m + c].abs().total_cmp(&a[y * m + c].abs()))?;
        if a[p * m + c].abs() < 1e-300 {
            return None;
        }
        if p != c {
            for k in 0..m {
                a.swap(c * m + k, p * m + k);
            }
            b.swap(c, p);
        }
        for r in c + 1..m {
            let f = a[r * m + c] / a[c * m + c];
            for k in c..m {
                a[r * m + k] -= f * a[c * m + k];
            }
            b[r] -= f * b[c];
        }
    }
    let mut x = vec![0.0; m];
    for c in (0..m).rev() {
        let s: f64 = (c + 1..m).map(|k| a[c * m + k] * x[k]).sum();
        x[c] = (b[c] - s) / a[c * m + c];
    }
    Some(x)
}

/// Minimum of the linear function `cost . x` over the feasible set,
/// a capacitated transportation problem solved by successive shortest paths.
pub(crate) fn linear_minimum(cost: &[f64], s: &Scenario) -> f64 {
    let n = s.len();
    let source = 0;
    let row = |j: usize| 1 + j;
    let col = |i: usize| 1 + n + i;
    let cloud = 1 + 2 * n;
    let sink = 2 + 2 * n;
    let mut g = FlowGraph::new(3 + 2 * n);
    let total = s.total_arrival();
    for j in 0..n {
        let lambda = s.node(j).arrival_rate();
        g.add_edge(source, row(j), lambda, 0.0);
        for i in 0..n {
            if s.may_forward(j, i) {
                g.add_edge(row(j), col(i), lambda, cost[j * n + i]);
            }
        }
        g.add_edge(row(j), cloud, lambda, cost[n * n + j]);
    }
    for i in 0..n {
        g.add_edge(col(i), sink, s.node(i).effective_capacity(), 0.0);
    }
    g.add_edge(cloud, sink, total, 0.0);
    g.min_cost_flow(source, sink, total)
}

struct FlowEdge {
    to: usize,
    cap: f64,
    cost: f64,
}

struct FlowGraph {
    edges: Vec<FlowEdge>,
    adj: Vec<Vec<usize>>,
}

impl FlowGraph {
    const EPS: f64 = 1e-12;

    fn new(nodes: usize) -> Self {
        Self {
            edges: Vec::new(),
            adj: vec![Vec::new(); nodes],
        }
    }

    fn add_edge(&mut self, from: usize, to: usize, cap: f64, cost: f64) {
        self.adj[from].push(self.edges.len());
        self.edges.push(FlowEdge { to, cap, cost });
        self.adj[to].push(self.edges.len());
        self.edges.push(FlowEdge {
            to: from,
            cap: 0.0,
            cost: -cost,
        });
    }

    fn min_cost_flow(&mut self, source: usize, sink: usize, demand: f64) -> f64 {
        let mut remaining = demand;
        let mut total_cost = 0.0;
        let max_rounds = 4 * self.edges.len() + 16;
        for _ in 0..max_rounds {
            if remaining <= Self::EPS * demand.max(1.0) {
                break;
            }
            let Some(path) = self.shortest_path(source, sink) else {
                break;
            };
            let push = path.iter().fold(remaining, |m, &e| m.min(self.edges[e].cap));
            for &e in &path {
                self.edges[e].cap -= push;
                self.edges[e ^ 1].cap += push;
                total_cost += push * self.edges[e].cost;
            }
            remaining -= push;
        }
        total_cost
    }

    /// Bellman-Ford over the residual graph, whose reverse edges carry
    /// negative costs. Returns the edge list from source to sink.
    fn shortest_path(&self, source: usize, sink: usize) -> Option<Vec<usize>> {
        let nodes = self.adj.len();
        let mut dist = vec![f64::INFINITY; nodes];
        let mut via = vec![usize::MAX; nodes];
        dist[source] = 0.0;
        for _ in 0..nodes {
            let mut changed = false;
            for u in 0..nodes {
                if !dist[u].is_finite() {
                    continue;
                }
                for &e in &self.adj[u] {
                    let edge = &self.edges[e];
                    let cand = dist[u] + edge.cost;
                    // relative slack keeps rounding from creating phantom cycles
                    if edge.cap > Self::EPS && cand < dist[edge.to] - 1e-12 * (1.0 + cand.abs()) {
                        dist[edge.to] = cand;
                        via[edge.to] = e;
                        changed = true;
                    }
                }
            }
            if !changed {
                break;
            }
        }
        if !dist[sink].is_finite() {
            return None;
        }
        let mut path = Vec::new();
        let mut v = sink;
        while v != source {
            let e = via[v];
            if e == usize::MAX || path.len() > nodes {
                return None;
            }
            path.push(e);
            v = self.edges[e ^ 1].to;
        }
        path.reverse();
        Some(path)
    }
}

#[derive(Debug, Clone)]
pub struct CentralOptions {
    /// Relative optimality gap certified by the linearization bound.
    pub tol: f64,
    pub max_iters: usize,
    pub record_timing: bool,
}

impl Default for CentralOptions {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            max_iters: 100_000,
            record_timing: false,
        }
    }
}

struct CoopProblem<'a> {
    s: &'a Scenario,
    set: FeasibleSet,
}

impl PgProblem for CoopProblem<'_> {
    fn value(&self, x: &[f64]) -> f64 {
        coop_objective(&Allocation::from_flat(self.s.len(), x), self.s).unwrap_or(f64::INFINITY)
    }
    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        coop_gradient(&Allocation::from_flat(self.s.len(), x), self.s)
            .expect("iterates stay inside the stable region")
    }
    fn project(&self, x: &[f64]) -> Vec<f64> {
        self.set.project(x)
    }
}

/// Feasible starting point: each node keeps half of what it could process
/// alone and sends the rest to the cloud.
fn initial_point(s: &Scenario) -> Allocation {
    let mut a = Allocation::cloud_only(s);
    for j in 0..s.len() {
        let lambda = s.node(j).arrival_rate();
        let local = 0.5 * lambda.min(s.node(j).effective_capacity());
        a.set(j, j, local);
        a.set_cloud(j, lambda - local);
    }
    a
}

/// Solve the cooperative problem to a certified relative gap `opts.tol`.
///
/// Projected gradient with Barzilai-Borwein steps and backtracking. At each
/// iterate the linearization bound `f(x) - min_y g.(y - x)` is computed
/// exactly, so termination certifies the gap.
pub fn solve_centralized(s: &Scenario, opts: &CentralOptions) -> Result<(Allocation, SolveTrace)> {
    let problem = CoopProblem {
        s,
        set: FeasibleSet::new(s),
    };
    let start = Instant::now();
    let mut trace = SolveTrace::new("central");
    let x0 = initial_point(s).to_flat();
    let pg_opts = PgOptions {
        max_iters: opts.max_iters,
        grad_tol: 0.0,
        ..PgOptions::default()
    };
    let mut certified = false;
    let out = pgd::minimize(&problem, x0, &pg_opts, |st| {
        let lin: f64 = st.grad.iter().zip(st.x).map(|(g, x)| g * x).sum();
        let gap = (lin - linear_minimum(st.grad, s)).max(0.0);
        trace.push(IterRecord {
            iter: st.iter + 1,
            objective: st.value,
            primal_residual: st.grad_map,
            dual_residual: gap,
            dual_norm: 0.0,
            ms: opts
                .record_timing
                .then(|| start.elapsed().as_secs_f64() * 1e3),
        });
        certified = gap <= opts.tol * st.value.abs();
        certified
    });
    let alloc = Allocation::from_flat(s.len(), &out.x);
    if !certified {
        return Err(FogError::NonConvergence {
            solver: "central",
            iters: out.iters,
            trace: Box::new(trace),
            last: Some(Box::new(alloc)),
        });
    }
    Ok((alloc, trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{NodeParams, PowerParams};

    fn node(lambda: f64, mu: f64, chi: f64) -> NodeParams {
        let p = PowerParams::new(1.0, 1.0, 0.0, 1.0 / chi).unwrap();
        NodeParams::new("n", lambda, mu, 0.01, p).unwrap()
    }

    fn two_nodes() -> Scenario {
        Scenario::fully_connected(vec![node(6.0, 8.0, 5.0), node(2.0, 10.0, 9.0)], 0.02, 0.1, 0.5)
            .unwrap()
    }

    #[test]
    fn feasibility_report_examples() {
        let s = two_nodes();
        let mut a = Allocation::zeros(2);
        a.set(0, 0, 3.0);
        a.set_cloud(1, 2.0);
        let r = check_feasibility(&a, &s);
        assert_eq!(r.row_residuals[0], -3.0);
        assert!(!r.feasible);

        let mut b = Allocation::cloud_only(&s);
        b.set(0, 0, 6.0);
        b.set_cloud(0, 0.0);
        let r = check_feasibility(&b, &s);
        // chi = 5 binds (0.999 * 8 > 5); load 6 = chi + 1
        assert!((r.column_slacks[0] + 1.0).abs() < 1e-12);
        assert!(!r.feasible);

        assert!(check_feasibility(&Allocation::cloud_only(&s), &s).feasible);
    }

    #[test]
    fn projection_is_idempotent_on_feasible_input() {
        let s = two_nodes();
        let mut a = Allocation::cloud_only(&s);
        a.set(0, 1, 2.0);
        a.set(0, 0, 3.0);
        a.set_cloud(0, 1.0);
        a.set(1, 1, 1.5);
        a.set_cloud(1, 0.5);
        assert!(check_feasibility(&a, &s).feasible);
        let p = project_feasible(&a, &s);
        assert!(p.max_abs_diff(&a) <= 1e-12);
    }

    #[test]
    fn zero_allocation_projects_to_cloud() {
        let s = two_nodes();
        let p = project_feasible(&Allocation::zeros(2), &s);
        // the nearest point puts equal mass on every option of a row; check
        // feasibility and that cloud absorbs what fog columns cannot
        assert!(check_feasibility(&p, &s).feasible);
        let iso = s.isolated();
        let q = project_feasible(&Allocation::zeros(2), &iso);
        assert!(check_feasibility(&q, &iso).feasible);
        assert_eq!(q.get(0, 1), 0.0);
    }

    #[test]
    fn linear_minimum_respects_caps() {
        let s = two_nodes();
        // fog is cheap, cloud is expensive: fill caps, rest to cloud
        let mut cost = vec![1.0; 4];
        cost.extend([10.0, 10.0]);
        let v = linear_minimum(&cost, &s);
        // caps 5 and 9 absorb all 8 units
        assert!((v - 8.0).abs() < 1e-9, "{v}");
        let tight = Scenario::fully_connected(vec![node(6.0, 8.0, 2.0), node(2.0, 10.0, 1.0)], 0.02, 0.1, 0.5)
            .unwrap();
        let v = linear_minimum(&cost, &tight);
        assert!((v - (3.0 + 50.0)).abs() < 1e-9, "{v}");
    }

    #[test]
    fn solve_is_deterministic() {
        let s = two_nodes();
        let opts = CentralOptions::default();
        let (a1, t1) = solve_centralized(&s, &opts).unwrap();
        let (a2, t2) = solve_centralized(&s, &opts).unwrap();
        assert_eq!(a1, a2);
        assert_eq!(t1, t2);
        assert!(check_feasibility(&a1, &s).feasible);
    }
}
