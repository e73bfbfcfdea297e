//! Two-phase network simplex for capacitated transportation.
//!
//! The network has one node per row, one per column, and an artificial root.
//! Real arcs run row `i` -> column `j` with capacity `upper_ij`; artificial
//! arcs run row -> root and root -> column. Phase 1 minimizes artificial
//! flow from the all-artificial starting tree (positive optimum means the
//! instance is infeasible and the loaded artificials name the unroutable
//! nodes); phase 2 pins artificials to zero and minimizes the real cost.
//!
//! Entering arcs are picked by largest reduced-cost violation with
//! smallest-index ties; after a run of degenerate pivots the rule drops to
//! pure smallest-index (Bland) until a nondegenerate pivot lands, which
//! keeps cycling impossible while staying deterministic.

use cot_core::{
    lift_plan, objective, reduce_to_upper_bounded, tolerances, validate_feasibility, DenseMatrix,
    ProblemInstance, TransportPlan,
};

use crate::{LpConfig, LpError, LpStatus};

/// Exact solution with its optimality certificate.
#[derive(Debug, Clone)]
pub struct LpSolution {
    /// Optimal plan when `status == Optimal`; best-effort current flow
    /// otherwise (not marginal-feasible for `Infeasible`).
    pub plan: TransportPlan,
    /// `<cost, plan>` against the original instance's cost.
    pub objective: f64,
    pub status: LpStatus,
    /// Primal-dual gap of the solved (reduced) problem. At most
    /// [`tolerances::LP_CERTIFICATE`] whenever `status == Optimal`.
    pub duality_gap: f64,
    pub pivots: usize,
}

pub fn lp_solve_exact(
    instance: &ProblemInstance,
    config: &LpConfig,
) -> Result<LpSolution, LpError> {
    let cells = instance.n() * instance.m();
    if cells > config.max_cells {
        return Err(LpError::SizeCap { cells, cap: config.max_cells });
    }
    let violations = validate_feasibility(instance);
    if !violations.is_empty() {
        return Err(LpError::InvalidInstance(violations));
    }

    // Nonzero lower bounds are removed up front; the plan lifts back after.
    let (reduced, record) = reduce_to_upper_bounded(instance)?;

    let mut simplex = Simplex::new(&reduced, config);
    let outcome = simplex.run()?;

    let reduced_plan = simplex.extract_plan()?;
    let plan = lift_plan(&reduced_plan, &record)?;
    let obj = objective(instance.cost(), &plan);

    let (status, gap) = match outcome {
        Outcome::Optimal => {
            let gap = simplex.duality_gap();
            if gap > config.gap_tolerance {
                return Err(LpError::CertificateFailed { gap, tol: config.gap_tolerance });
            }
            (LpStatus::Optimal, gap)
        }
        Outcome::Infeasible { unmet_rows, unmet_cols } => {
            (LpStatus::Infeasible { unmet_rows, unmet_cols }, f64::INFINITY)
        }
        Outcome::IterationLimit => (LpStatus::IterationLimit, f64::INFINITY),
    };

    Ok(LpSolution { plan, objective: obj, status, duality_gap: gap, pivots: simplex.pivots })
}

enum Outcome {
    Optimal,
    Infeasible { unmet_rows: Vec<usize>, unmet_cols: Vec<usize> },
    IterationLimit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ArcState {
    Lower,
    Upper,
    Basic,
}

struct Simplex<'a> {
    n: usize,
    m: usize,
    nm: usize,
    root: usize,
    num_arcs: usize,
    cap: Vec<f64>,
    cost: Vec<f64>,
    flow: Vec<f64>,
    state: Vec<ArcState>,
    // spanning tree over n + m + 1 nodes
    parent: Vec<usize>,
    parent_arc: Vec<usize>,
    depth: Vec<usize>,
    order: Vec<usize>, // nodes in BFS order from the root
    adj: Vec<Vec<usize>>,
    pi: Vec<f64>,
    price_tol: f64,
    flow_tol: f64,
    max_pivots: usize,
    pivots: usize,
    instance: &'a ProblemInstance,
}

const NO_NODE: usize = usize::MAX;

impl<'a> Simplex<'a> {
    fn new(instance: &'a ProblemInstance, config: &LpConfig) -> Self {
        let n = instance.n();
        let m = instance.m();
        let nm = n * m;
        let nodes = n + m + 1;
        let num_arcs = nm + n + m;

        let mut cap = vec![0.0; num_arcs];
        for i in 0..n {
            for j in 0..m {
                cap[i * m + j] = instance.upper(i, j);
            }
        }
        for a in nm..num_arcs {
            cap[a] = f64::INFINITY;
        }

        // phase-1 costs: unit on artificials, free on real arcs
        let mut cost = vec![0.0; num_arcs];
        for c in cost.iter_mut().skip(nm) {
            *c = 1.0;
        }

        let mut flow = vec![0.0; num_arcs];
        let mut state = vec![ArcState::Lower; num_arcs];
        let mut adj = vec![Vec::new(); nodes];
        for i in 0..n {
            let a = nm + i;
            flow[a] = instance.u()[i];
            state[a] = ArcState::Basic;
            adj[i].push(a);
            adj[n + m].push(a);
        }
        for j in 0..m {
            let a = nm + n + j;
            flow[a] = instance.v()[j];
            state[a] = ArcState::Basic;
            adj[n + j].push(a);
            adj[n + m].push(a);
        }

        let max_pivots = if config.max_pivots == 0 {
            20_000 + 10 * nm + 200 * (n + m)
        } else {
            config.max_pivots
        };

        let mut s = Self {
            n,
            m,
            nm,
            root: n + m,
            num_arcs,
            cap,
            cost,
            flow,
            state,
            parent: vec![NO_NODE; nodes],
            parent_arc: vec![usize::MAX; nodes],
            depth: vec![0; nodes],
            order: Vec::with_capacity(nodes),
            adj,
            pi: vec![0.0; nodes],
            price_tol: 1e-12,
            flow_tol: 1e-13,
            max_pivots,
            pivots: 0,
            instance,
        };
        s.rebuild_tree();
        s
    }

    #[inline]
    fn endpoints(&self, a: usize) -> (usize, usize) {
        if a < self.nm {
            (a / self.m, self.n + a % self.m)
        } else if a < self.nm + self.n {
            (a - self.nm, self.root)
        } else {
            (self.root, self.n + (a - self.nm - self.n))
        }
    }

    #[inline]
    fn reduced_cost(&self, a: usize) -> f64 {
        let (s, t) = self.endpoints(a);
        self.cost[a] - self.pi[s] + self.pi[t]
    }

    /// Recomputes parent/depth/order/potentials from the basic-arc adjacency
    /// by BFS from the root. `O(nodes)`.
    fn rebuild_tree(&mut self) {
        let nodes = self.parent.len();
        for x in 0..nodes {
            self.parent[x] = NO_NODE;
            self.depth[x] = 0;
        }
        self.order.clear();
        self.pi[self.root] = 0.0;
        self.parent[self.root] = self.root;
        let mut queue = std::collections::VecDeque::with_capacity(nodes);
        queue.push_back(self.root);
        while let Some(x) = queue.pop_front() {
            self.order.push(x);
            for idx in 0..self.adj[x].len() {
                let a = self.adj[x][idx];
                let (s, t) = self.endpoints(a);
                let y = if s == x { t } else { s };
                if self.parent[y] != NO_NODE {
                    continue;
                }
                self.parent[y] = x;
                self.parent_arc[y] = a;
                self.depth[y] = self.depth[x] + 1;
                // basic arcs satisfy pi[tail] - pi[head] = cost
                self.pi[y] = if s == x { self.pi[x] - self.cost[a] } else { self.cost[a] + self.pi[x] };
                queue.push_back(y);
            }
        }
        self.parent[self.root] = NO_NODE;
        debug_assert_eq!(self.order.len(), nodes, "basis must span all nodes");
    }

    /// Largest-violation entering arc (smallest index on ties), or smallest
    /// index outright under Bland's rule. Arcs with zero capacity can never
    /// carry flow and are skipped.
    fn find_entering(&self, bland: bool) -> Option<usize> {
        let mut best: Option<(f64, usize)> = None;
        for a in 0..self.num_arcs {
            let violation = match self.state[a] {
                ArcState::Basic => continue,
                ArcState::Lower => {
                    if self.cap[a] <= 0.0 {
                        continue;
                    }
                    -self.reduced_cost(a)
                }
                ArcState::Upper => self.reduced_cost(a),
            };
            if violation <= self.price_tol {
                continue;
            }
            if bland {
                return Some(a);
            }
            match best {
                Some((v, _)) if v >= violation => {}
                _ => best = Some((violation, a)),
            }
        }
        best.map(|(_, a)| a)
    }

    /// One pivot on entering arc `e`. Returns the step length.
    fn pivot(&mut self, e: usize) -> Result<f64, LpError> {
        let (s, t) = self.endpoints(e);
        let along = self.state[e] == ArcState::Lower;
        // Flow is pushed through `e` from `from` to `to`; the tree path from
        // `to` back to `from` closes the cycle.
        let (from, to) = if along { (s, t) } else { (t, s) };

        // cycle arcs as (arc, sign): flow change is sign * delta
        let mut cycle: Vec<(usize, f64)> = Vec::with_capacity(16);
        cycle.push((e, if along { 1.0 } else { -1.0 }));

        let (mut x, mut y) = (to, from);
        // climb to equal depth, then in lockstep to the join
        while self.depth[x] > self.depth[y] {
            let a = self.parent_arc[x];
            let (at, _) = self.endpoints(a);
            cycle.push((a, if at == x { 1.0 } else { -1.0 }));
            x = self.parent[x];
        }
        while self.depth[y] > self.depth[x] {
            let a = self.parent_arc[y];
            let (at, _) = self.endpoints(a);
            cycle.push((a, if at == y { -1.0 } else { 1.0 }));
            y = self.parent[y];
        }
        while x != y {
            let a = self.parent_arc[x];
            let (at, _) = self.endpoints(a);
            cycle.push((a, if at == x { 1.0 } else { -1.0 }));
            x = self.parent[x];
            let b = self.parent_arc[y];
            let (bt, _) = self.endpoints(b);
            cycle.push((b, if bt == y { -1.0 } else { 1.0 }));
            y = self.parent[y];
        }

        // step length and blocking arc (smallest residual; smallest arc id
        // on ties, for determinism)
        let mut delta = f64::INFINITY;
        for &(a, sign) in &cycle {
            let residual = if sign > 0.0 { self.cap[a] - self.flow[a] } else { self.flow[a] };
            if residual < delta {
                delta = residual;
            }
        }
        if !delta.is_finite() {
            return Err(LpError::Numerical("unbounded pivot step".into()));
        }
        let mut leaving = usize::MAX;
        let mut leaving_sign = 0.0;
        for &(a, sign) in &cycle {
            let residual = if sign > 0.0 { self.cap[a] - self.flow[a] } else { self.flow[a] };
            if residual <= delta && a < leaving {
                leaving = a;
                leaving_sign = sign;
            }
        }

        for &(a, sign) in &cycle {
            self.flow[a] += sign * delta;
        }
        // pin the blocking arc exactly at its bound
        self.flow[leaving] = if leaving_sign > 0.0 { self.cap[leaving] } else { 0.0 };

        if leaving == e {
            // bound flip, basis unchanged
            self.state[e] = if along { ArcState::Upper } else { ArcState::Lower };
        } else {
            self.state[e] = ArcState::Basic;
            self.state[leaving] =
                if leaving_sign > 0.0 { ArcState::Upper } else { ArcState::Lower };
            let (es, et) = self.endpoints(e);
            self.adj[es].push(e);
            self.adj[et].push(e);
            let (ls, lt) = self.endpoints(leaving);
            self.adj[ls].retain(|&a| a != leaving);
            self.adj[lt].retain(|&a| a != leaving);
            self.rebuild_tree();
        }
        Ok(delta)
    }

    /// Runs the current-phase simplex to optimality or the pivot budget.
    fn optimize(&mut self) -> Result<bool, LpError> {
        let mut bland = false;
        let mut degenerate_run = 0usize;
        let stall = 50 * (self.n + self.m) + 100;
        while let Some(e) = self.find_entering(bland) {
            if self.pivots >= self.max_pivots {
                return Ok(false);
            }
            self.pivots += 1;
            let delta = self.pivot(e)?;
            if delta <= self.flow_tol {
                degenerate_run += 1;
                if degenerate_run >= stall {
                    bland = true;
                }
            } else {
                degenerate_run = 0;
                bland = false;
            }
        }
        Ok(true)
    }

    fn run(&mut self) -> Result<Outcome, LpError> {
        // phase 1: drive artificial flow to zero
        if !self.optimize()? {
            return Ok(Outcome::IterationLimit);
        }
        self.recompute_flows()?;
        let artificial_flow: f64 = self.flow[self.nm..].iter().sum();
        if artificial_flow > 1e-10 {
            let unmet_rows: Vec<usize> =
                (0..self.n).filter(|&i| self.flow[self.nm + i] > 1e-12).collect();
            let unmet_cols: Vec<usize> =
                (0..self.m).filter(|&j| self.flow[self.nm + self.n + j] > 1e-12).collect();
            return Ok(Outcome::Infeasible { unmet_rows, unmet_cols });
        }

        // phase 2: real costs; artificials pinned to zero capacity so they
        // can linger in the basis only as degenerate arcs
        for i in 0..self.n {
            for j in 0..self.m {
                self.cost[i * self.m + j] = self.instance.cost().value(i, j);
            }
        }
        let cmax = self.instance.cost().max_abs(self.n, self.m);
        self.price_tol = 1e-12 * cmax.max(1.0);
        for a in self.nm..self.num_arcs {
            self.cost[a] = 0.0;
            self.cap[a] = 0.0;
            self.flow[a] = 0.0;
        }
        self.rebuild_tree();

        if !self.optimize()? {
            return Ok(Outcome::IterationLimit);
        }
        self.recompute_flows()?;
        Ok(Outcome::Optimal)
    }

    /// Re-derives basic flows exactly from node balances by peeling the
    /// tree from the leaves, wiping accumulated pivot arithmetic.
    fn recompute_flows(&mut self) -> Result<(), LpError> {
        let nodes = self.parent.len();
        let mut r = vec![0.0; nodes];
        for i in 0..self.n {
            r[i] = self.instance.u()[i];
        }
        for j in 0..self.m {
            r[self.n + j] = -self.instance.v()[j];
        }
        for a in 0..self.num_arcs {
            match self.state[a] {
                ArcState::Basic | ArcState::Lower => {}
                ArcState::Upper => {
                    let (s, t) = self.endpoints(a);
                    self.flow[a] = self.cap[a];
                    r[s] -= self.cap[a];
                    r[t] += self.cap[a];
                }
            }
            if self.state[a] != ArcState::Basic && self.state[a] != ArcState::Upper {
                self.flow[a] = 0.0;
            }
        }
        // deepest-first: each node's parent arc is its last unresolved arc
        for &x in self.order.iter().rev() {
            if x == self.root {
                continue;
            }
            let a = self.parent_arc[x];
            let (s, _) = self.endpoints(a);
            let p = self.parent[x];
            if s == x {
                // arc x -> p carries the remaining outflow of x
                let f = r[x];
                self.flow[a] = f;
                r[x] = 0.0;
                r[p] += f;
            } else {
                // arc p -> x delivers the remaining inflow of x
                let f = -r[x];
                self.flow[a] = f;
                r[x] = 0.0;
                r[p] -= f;
            }
        }
        if r[self.root].abs() > 1e-9 {
            return Err(LpError::Numerical(format!(
                "tree flow recomputation left residual {} at the root",
                r[self.root]
            )));
        }
        // basic flows live in [0, cap] up to float noise; clamp it away
        for a in 0..self.num_arcs {
            if self.state[a] == ArcState::Basic {
                let f = self.flow[a];
                if f < -1e-9 || f > self.cap[a] + 1e-9 {
                    return Err(LpError::Numerical(format!(
                        "basic flow {} outside [0, {}] on arc {}",
                        f, self.cap[a], a
                    )));
                }
                self.flow[a] = f.clamp(0.0, self.cap[a]);
            }
        }
        Ok(())
    }

    /// Weak-duality gap `primal - dual` for the phase-2 problem:
    /// `dual = sum_nodes b pi + sum_arcs cap * min(rc, 0)`.
    fn duality_gap(&self) -> f64 {
        let mut primal = 0.0;
        for a in 0..self.nm {
            if self.flow[a] != 0.0 {
                primal += self.cost[a] * self.flow[a];
            }
        }
        let mut dual = 0.0;
        for i in 0..self.n {
            dual += self.instance.u()[i] * self.pi[i];
        }
        for j in 0..self.m {
            dual -= self.instance.v()[j] * self.pi[self.n + j];
        }
        for a in 0..self.nm {
            let rc = self.reduced_cost(a);
            if rc < 0.0 {
                dual += self.cap[a] * rc;
            }
        }
        primal - dual
    }

    fn extract_plan(&self) -> Result<TransportPlan, LpError> {
        let mut gamma = DenseMatrix::zeros(self.n, self.m);
        for i in 0..self.n {
            for j in 0..self.m {
                gamma.set(i, j, self.flow[i * self.m + j]);
            }
        }
        Ok(TransportPlan::new(gamma)?)
    }
}

/// Relative objective error of a candidate plan against the oracle:
/// `|<C, candidate> - <C, oracle>| / |<C, oracle>|`. When the oracle
/// objective is (numerically) zero the value degrades to the absolute gap
/// and `absolute` is set.
#[derive(Debug, Clone, Copy)]
pub struct ErrorMetric {
    pub value: f64,
    pub absolute: bool,
}

pub fn relative_error(
    candidate: &TransportPlan,
    instance: &ProblemInstance,
    oracle: &LpSolution,
) -> ErrorMetric {
    relative_error_from_objectives(objective(instance.cost(), candidate), oracle.objective)
}

pub fn relative_error_from_objectives(candidate: f64, oracle: f64) -> ErrorMetric {
    let gap = (candidate - oracle).abs();
    if oracle.abs() < tolerances::FEASIBILITY {
        ErrorMetric { value: gap, absolute: true }
    } else {
        ErrorMetric { value: gap / oracle.abs(), absolute: false }
    }
}
