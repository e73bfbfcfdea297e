//! Outer iteration: alternating half sweeps that re-solve each dual scaling
//! exactly, with log-domain absorption keeping the explicit scalings inside
//! floating-point range.

use std::time::Instant;

use cot_core::{
    lift_plan, marginal_residuals, reduce_to_upper_bounded, validate_feasibility, DenseMatrix,
    ProblemInstance, SolveReport, StopReason, TraceRecord, TransportPlan,
};

use crate::eval::{col_weights, fill_col_caps, fill_row_caps, row_weights, MarginFn};
use crate::rootfind::{newton_root, NewtonCfg, RootOutcome, X_MAX};
use crate::{Axis, DrmError, Result};

/// Relative interior margin required of every row and column: mass must stay
/// below `(1 - STRICT_MARGIN)` times the line's total capacity, or the dual
/// scalings the sweeps look for do not exist at any finite value.
pub const STRICT_MARGIN: f64 = 1e-10;

/// Newton residuals below `this * max(mass)` stop the inner iteration even
/// before the step-size test fires.
const RESIDUAL_FLOOR_REL: f64 = 1e-12;

const MAX_BRACKET_STEPS: usize = 200;

/// 2^200: bounded partial step taken when a whole line's kernel weights
/// have underflowed; absorption then shifts the offsets until cells revive.
const FLAT_STEP: f64 = 1.6069380442589903e60;

/// Loop-local scalars counted into the state size next to the buffers.
const STATE_OVERHEAD: usize = 16;

#[derive(Debug, Clone)]
pub struct DrmConfig {
    pub epsilon: f64,
    /// Outer stop: relative l1 change of the log-domain duals per iteration.
    pub outer_tol: f64,
    /// Inner stop: relative change of adjacent Newton iterates.
    pub newton_tol: f64,
    pub max_outer_iters: usize,
    pub newton_max_iters: usize,
    /// Absorb explicit scalings into the log offsets once any of them
    /// leaves `[1/threshold, threshold]`.
    pub stabilization_threshold: f64,
    pub stabilize: bool,
}

impl Default for DrmConfig {
    fn default() -> Self {
        Self {
            epsilon: 1e-3,
            outer_tol: 1e-5,
            newton_tol: 1e-5,
            max_outer_iters: 100_000,
            newton_max_iters: 100,
            stabilization_threshold: 1e20,
            stabilize: true,
        }
    }
}

fn check_config(config: &DrmConfig) -> Result<()> {
    let bad = |reason: &str| {
        Err(DrmError::Config { reason: reason.to_string() })
    };
    if !(config.epsilon.is_finite() && config.epsilon > 0.0) {
        return bad("epsilon must be positive and finite");
    }
    if !(config.outer_tol.is_finite() && config.outer_tol > 0.0) {
        return bad("outer_tol must be positive and finite");
    }
    if !(config.newton_tol.is_finite() && config.newton_tol > 0.0) {
        return bad("newton_tol must be positive and finite");
    }
    if config.max_outer_iters == 0 {
        return bad("max_outer_iters must be at least 1");
    }
    if config.newton_max_iters == 0 {
        return bad("newton_max_iters must be at least 1");
    }
    if !(config.stabilization_threshold > 1.0) {
        return bad("stabilization_threshold must exceed 1");
    }
    Ok(())
}

/// Dual scalings in product form: the effective row factor is
/// `phi_i * exp(alpha_abs_i / epsilon)`, likewise for columns. The explicit
/// parts stay near 1 while the absorbed offsets carry the bulk, which keeps
/// every quantity the sweeps touch representable.
#[derive(Debug, Clone)]
pub struct DualPotentials {
    pub phi: Vec<f64>,
    pub psi: Vec<f64>,
    pub alpha_abs: Vec<f64>,
    pub beta_abs: Vec<f64>,
}

impl DualPotentials {
    pub fn new(n: usize, m: usize) -> Self {
        Self {
            phi: vec![1.0 / n as f64; n],
            psi: vec![1.0 / m as f64; m],
            alpha_abs: vec![0.0; n],
            beta_abs: vec![0.0; m],
        }
    }

    /// Moves the explicit scalings into the absorbed offsets. Exact no-op
    /// on the iterates: each product `phi_i * exp(alpha_i / eps)` keeps its
    /// value, only the representation changes.
    pub fn stabilize(&mut self, epsilon: f64) {
        for (p, a) in self.phi.iter_mut().zip(&mut self.alpha_abs) {
            *a += epsilon * p.ln();
            *p = 1.0;
        }
        for (p, b) in self.psi.iter_mut().zip(&mut self.beta_abs) {
            *b += epsilon * p.ln();
            *p = 1.0;
        }
    }

    /// True once any explicit scaling left `[1/threshold, threshold]`.
    pub fn needs_stabilization(&self, threshold: f64) -> bool {
        let inv = 1.0 / threshold;
        self.phi.iter().chain(&self.psi).any(|&x| x > threshold || x < inv)
    }

    /// Log-domain row dual `alpha_i + eps * ln(phi_i)`. Invariant under
    /// stabilization, which makes it the right quantity for stop tests.
    pub fn row_log(&self, i: usize, epsilon: f64) -> f64 {
        self.alpha_abs[i] + epsilon * self.phi[i].ln()
    }

    pub fn col_log(&self, j: usize, epsilon: f64) -> f64 {
        self.beta_abs[j] + epsilon * self.psi[j].ln()
    }
}

/// Rebuilds the primal plan from the duals:
/// `gamma_ij = eta_ij * sigma(s_ij)` with the logistic `sigma` and
/// `s_ij = ln(phi_i) + ln(psi_j) + (alpha_i + beta_j - C_ij) / eps`.
/// Saturated cells (`s -> +inf`) land exactly on `eta_ij`, dead cells
/// (`s -> -inf`) exactly on zero; entries without capacity stay zero.
pub fn recover_plan(
    instance: &ProblemInstance,
    duals: &DualPotentials,
    epsilon: f64,
) -> Result<TransportPlan> {
    let n = instance.n();
    let m = instance.m();
    let cost = instance.cost();
    let lpsi: Vec<f64> = duals.psi.iter().map(|p| p.ln()).collect();
    let mut data = vec![0.0; n * m];
    for i in 0..n {
        let lphi = duals.phi[i].ln();
        let ai = duals.alpha_abs[i];
        for j in 0..m {
            let eta = instance.upper(i, j);
            if eta == 0.0 {
                continue;
            }
            let s = lphi + lpsi[j] + (ai + duals.beta_abs[j] - cost.value(i, j)) / epsilon;
            data[i * m + j] = eta / (1.0 + (-s).exp());
        }
    }
    Ok(TransportPlan::new(DenseMatrix::new(n, m, data)?)?)
}

struct Scratch {
    weights: Vec<f64>,
    caps: Vec<f64>,
}

impl Scratch {
    fn new(n: usize, m: usize) -> Self {
        let len = n.max(m);
        Self { weights: vec![0.0; len], caps: vec![0.0; len] }
    }

    fn scalars(&self) -> usize {
        self.weights.len() + self.caps.len()
    }
}

fn newton_cfg(config: &DrmConfig, mass_scale: f64) -> NewtonCfg {
    NewtonCfg {
        rel_tol: config.newton_tol,
        abs_residual_floor: RESIDUAL_FLOOR_REL * mass_scale,
        max_iters: config.newton_max_iters,
        max_bracket_steps: MAX_BRACKET_STEPS,
    }
}

fn max_of(xs: &[f64]) -> f64 {
    xs.iter().copied().fold(0.0, f64::max)
}

fn sweep_rows(
    instance: &ProblemInstance,
    duals: &mut DualPotentials,
    epsilon: f64,
    ncfg: &NewtonCfg,
    scratch: &mut Scratch,
    stabilize: bool,
) -> Result<usize> {
    let n = instance.n();
    let m = instance.m();
    let u = instance.u();
    let mut total = 0usize;
    for i in 0..n {
        let weights = &mut scratch.weights[..m];
        let caps = &mut scratch.caps[..m];
        let cap_total = fill_row_caps(instance, i, caps);
        row_weights(instance, i, &duals.psi, duals.alpha_abs[i], &duals.beta_abs, epsilon, weights);
        let margin = MarginFn { weights, caps, cap_total, mass: u[i] };
        if margin.is_flat() {
            if !stabilize {
                return Err(DrmError::KernelUnderflow { axis: Axis::Row, index: i });
            }
            duals.phi[i] = (duals.phi[i] * FLAT_STEP).min(X_MAX);
            continue;
        }
        match newton_root(|x| margin.value_and_derivative(x), duals.phi[i], ncfg) {
            Ok(RootOutcome::Converged { root, iters }) => {
                duals.phi[i] = root;
                total += iters;
            }
            Ok(RootOutcome::Saturated { at, iters }) => {
                total += iters;
                if !stabilize {
                    return Err(DrmError::KernelUnderflow { axis: Axis::Row, index: i });
                }
                // partial step; absorption realigns the offsets afterwards
                duals.phi[i] = at;
            }
            Err(source) => {
                return Err(DrmError::NewtonFailure { axis: Axis::Row, index: i, source })
            }
        }
    }
    Ok(total)
}

fn sweep_cols(
    instance: &ProblemInstance,
    duals: &mut DualPotentials,
    epsilon: f64,
    ncfg: &NewtonCfg,
    scratch: &mut Scratch,
    stabilize: bool,
) -> Result<usize> {
    let n = instance.n();
    let m = instance.m();
    let v = instance.v();
    let mut total = 0usize;
    for j in 0..m {
        let weights = &mut scratch.weights[..n];
        let caps = &mut scratch.caps[..n];
        let cap_total = fill_col_caps(instance, j, caps);
        col_weights(instance, j, &duals.phi, &duals.alpha_abs, duals.beta_abs[j], epsilon, weights);
        let margin = MarginFn { weights, caps, cap_total, mass: v[j] };
        if margin.is_flat() {
            if !stabilize {
                return Err(DrmError::KernelUnderflow { axis: Axis::Col, index: j });
            }
            duals.psi[j] = (duals.psi[j] * FLAT_STEP).min(X_MAX);
            continue;
        }
        match newton_root(|x| margin.value_and_derivative(x), duals.psi[j], ncfg) {
            Ok(RootOutcome::Converged { root, iters }) => {
                duals.psi[j] = root;
                total += iters;
            }
            Ok(RootOutcome::Saturated { at, iters }) => {
                total += iters;
                if !stabilize {
                    return Err(DrmError::KernelUnderflow { axis: Axis::Col, index: j });
                }
                duals.psi[j] = at;
            }
            Err(source) => {
                return Err(DrmError::NewtonFailure { axis: Axis::Col, index: j, source })
            }
        }
    }
    Ok(total)
}

/// One row half sweep at `config.epsilon` against the current column data.
/// Expects an upper-bounded instance (zero lower bounds). Returns the inner
/// iterations spent.
pub fn half_sweep_rows(
    instance: &ProblemInstance,
    duals: &mut DualPotentials,
    config: &DrmConfig,
) -> Result<usize> {
    check_config(config)?;
    let mut scratch = Scratch::new(instance.n(), instance.m());
    let ncfg = newton_cfg(config, max_of(instance.u()));
    sweep_rows(instance, duals, config.epsilon, &ncfg, &mut scratch, config.stabilize)
}

/// Column counterpart of [`half_sweep_rows`].
pub fn half_sweep_cols(
    instance: &ProblemInstance,
    duals: &mut DualPotentials,
    config: &DrmConfig,
) -> Result<usize> {
    check_config(config)?;
    let mut scratch = Scratch::new(instance.n(), instance.m());
    let ncfg = newton_cfg(config, max_of(instance.v()));
    sweep_cols(instance, duals, config.epsilon, &ncfg, &mut scratch, config.stabilize)
}

fn check_interior(instance: &ProblemInstance) -> Result<()> {
    let n = instance.n();
    let m = instance.m();
    let row_caps = instance.bounds().upper().row_sums(n, m);
    for (i, (&mass, &cap)) in instance.u().iter().zip(&row_caps).enumerate() {
        if mass <= 0.0 {
            return Err(DrmError::DegenerateMass { axis: Axis::Row, index: i });
        }
        if mass > (1.0 - STRICT_MARGIN) * cap {
            return Err(DrmError::DegenerateCapacity {
                axis: Axis::Row,
                index: i,
                mass,
                capacity: cap,
            });
        }
    }
    let col_caps = instance.bounds().upper().col_sums(n, m);
    for (j, (&mass, &cap)) in instance.v().iter().zip(&col_caps).enumerate() {
        if mass <= 0.0 {
            return Err(DrmError::DegenerateMass { axis: Axis::Col, index: j });
        }
        if mass > (1.0 - STRICT_MARGIN) * cap {
            return Err(DrmError::DegenerateCapacity {
                axis: Axis::Col,
                index: j,
                mass,
                capacity: cap,
            });
        }
    }
    Ok(())
}

/// Marginal residuals and transport cost of the current iterate, streamed
/// without materializing the plan. Trace-path only.
fn iterate_stats(
    instance: &ProblemInstance,
    duals: &DualPotentials,
    epsilon: f64,
) -> (f64, f64, f64) {
    let n = instance.n();
    let m = instance.m();
    let cost = instance.cost();
    let lpsi: Vec<f64> = duals.psi.iter().map(|p| p.ln()).collect();
    let mut rows = vec![0.0; n];
    let mut cols = vec![0.0; m];
    let mut objective = 0.0;
    for i in 0..n {
        let lphi = duals.phi[i].ln();
        let ai = duals.alpha_abs[i];
        for j in 0..m {
            let eta = instance.upper(i, j);
            if eta == 0.0 {
                continue;
            }
            let c = cost.value(i, j);
            let s = lphi + lpsi[j] + (ai + duals.beta_abs[j] - c) / epsilon;
            let g = eta / (1.0 + (-s).exp());
            rows[i] += g;
            cols[j] += g;
            objective += g * c;
        }
    }
    let row_res =
        rows.iter().zip(instance.u()).map(|(r, u)| (r - u).abs()).fold(0.0, f64::max);
    let col_res =
        cols.iter().zip(instance.v()).map(|(c, v)| (c - v).abs()).fold(0.0, f64::max);
    (row_res, col_res, objective)
}

#[derive(Debug, Clone)]
pub struct DrmSolution {
    pub plan: TransportPlan,
    pub report: SolveReport,
}

pub fn drm_solve(instance: &ProblemInstance, config: &DrmConfig) -> Result<DrmSolution> {
    drm_solve_traced(instance, config, None)
}

/// Full solve with an optional per-iteration trace callback. Tracing adds
/// one plan-recovery pass per outer iteration; untraced runs never touch
/// plan-sized memory until the final recovery.
pub fn drm_solve_traced(
    instance: &ProblemInstance,
    config: &DrmConfig,
    mut trace: Option<&mut dyn FnMut(TraceRecord)>,
) -> Result<DrmSolution> {
    let start = Instant::now();
    check_config(config)?;
    let violations = validate_feasibility(instance);
    if !violations.is_empty() {
        return Err(DrmError::Infeasible(violations));
    }

    // Nonzero lower bounds are folded away up front; the sweeps only ever
    // see an upper-bounded instance. The entropy scale shrinks with the
    // remaining mass: regularizing the reduced instance at k * epsilon is
    // the same problem as regularizing the original at epsilon.
    let (reduced, record) = reduce_to_upper_bounded(instance)?;
    let k = record.k_theta();
    let epsilon = config.epsilon * k;
    let fixed_cost = record.fixed_cost(instance.cost());

    let n = reduced.n();
    let m = reduced.m();
    check_interior(&reduced)?;

    let mut duals = DualPotentials::new(n, m);
    let mut scratch = Scratch::new(n, m);
    let mut prev_a: Vec<f64> = (0..n).map(|i| duals.row_log(i, epsilon)).collect();
    let mut prev_b: Vec<f64> = (0..m).map(|j| duals.col_log(j, epsilon)).collect();

    // scalings and offsets, previous log duals, sweep scratch, loop locals
    let state_scalars = duals.phi.len()
        + duals.psi.len()
        + duals.alpha_abs.len()
        + duals.beta_abs.len()
        + prev_a.len()
        + prev_b.len()
        + scratch.scalars()
        + STATE_OVERHEAD;

    let ncfg_rows = newton_cfg(config, max_of(reduced.u()));
    let ncfg_cols = newton_cfg(config, max_of(reduced.v()));

    let mut history: Vec<f64> = Vec::new();
    let mut newton_total = 0usize;
    let mut converged = false;
    let mut iters_done = 0usize;

    for iter in 1..=config.max_outer_iters {
        iters_done = iter;
        newton_total +=
            sweep_rows(&reduced, &mut duals, epsilon, &ncfg_rows, &mut scratch, config.stabilize)?;
        if config.stabilize && duals.needs_stabilization(config.stabilization_threshold) {
            duals.stabilize(epsilon);
        }
        newton_total +=
            sweep_cols(&reduced, &mut duals, epsilon, &ncfg_cols, &mut scratch, config.stabilize)?;
        if config.stabilize && duals.needs_stabilization(config.stabilization_threshold) {
            duals.stabilize(epsilon);
        }

        // relative l1 change of the log-domain duals; the epsilon floor in
        // the denominator makes the test effectively absolute when the
        // duals pass near zero
        let mut delta = 0.0f64;
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..n {
            let a = duals.row_log(i, epsilon);
            num += (a - prev_a[i]).abs();
            den += a.abs();
            prev_a[i] = a;
        }
        delta = delta.max(num / den.max(epsilon));
        let mut num = 0.0;
        let mut den = 0.0;
        for j in 0..m {
            let b = duals.col_log(j, epsilon);
            num += (b - prev_b[j]).abs();
            den += b.abs();
            prev_b[j] = b;
        }
        delta = delta.max(num / den.max(epsilon));

        history.push(delta);
        if let Some(cb) = trace.as_mut() {
            let (row_res, col_res, reduced_objective) = iterate_stats(&reduced, &duals, epsilon);
            cb(TraceRecord {
                iter,
                delta_outer: delta,
                row_residual: k * row_res,
                col_residual: k * col_res,
                elapsed_s: start.elapsed().as_secs_f64(),
                objective: reduced_objective + fixed_cost,
            });
        }
        if delta <= config.outer_tol {
            converged = true;
            break;
        }
    }

    let reduced_plan = recover_plan(&reduced, &duals, epsilon)?;
    let plan = lift_plan(&reduced_plan, &record)?;
    let (final_row_residual, final_col_residual) =
        marginal_residuals(&plan, instance.marginals());
    let report = SolveReport {
        outer_iters: iters_done,
        converged,
        stop_reason: if converged { StopReason::Tolerance } else { StopReason::MaxIters },
        outer_residual_history: history,
        total_newton_iters: newton_total,
        wall_time_s: start.elapsed().as_secs_f64(),
        final_row_residual,
        final_col_residual,
        state_scalars,
    };
    Ok(DrmSolution { plan, report })
}

#[cfg(test)]
mod tests {
    use super::*;
    use cot_core::{max_bound_violation, objective};
    use cot_core::{BoundSpec, CapacityBounds, CostSpec, Marginals};
    use instance_gen::{gen_instance, GenSpec};
    use lp_oracle::{lp_solve_exact, relative_error, LpConfig, LpStatus};

    fn dense_instance(
        cost: Vec<f64>,
        u: Vec<f64>,
        v: Vec<f64>,
        eta: f64,
    ) -> ProblemInstance {
        let n = u.len();
        let m = v.len();
        ProblemInstance::new(
            n,
            m,
            CostSpec::Dense { matrix: DenseMatrix::new(n, m, cost).unwrap() },
            Marginals::new(u, v).unwrap(),
            CapacityBounds::upper_only(BoundSpec::Uniform { value: eta }),
        )
        .unwrap()
    }

    #[test]
    fn one_cell_solve_is_exact() {
        let inst = dense_instance(vec![0.0], vec![1.0], vec![1.0], 2.0);
        let sol = drm_solve(&inst, &DrmConfig::default()).unwrap();
        assert!(sol.report.converged);
        assert_eq!(sol.report.outer_iters, 1);
        assert!((sol.plan.get(0, 0) - 1.0).abs() < 1e-12);
        assert!(sol.report.final_row_residual < 1e-12);
    }

    #[test]
    fn saturated_row_is_rejected_up_front() {
        // row capacity exceeds the mass by less than the interior margin
        let inst = dense_instance(vec![0.0], vec![1.0], vec![1.0], 1.0 + 1e-12);
        match drm_solve(&inst, &DrmConfig::default()) {
            Err(DrmError::DegenerateCapacity { axis: Axis::Row, index: 0, .. }) => {}
            other => panic!("expected a capacity degeneracy, got {other:?}"),
        }
    }

    #[test]
    fn zero_mass_line_is_rejected_up_front() {
        let inst = dense_instance(
            vec![0.0, 1.0, 1.0, 0.0],
            vec![0.0, 1.0],
            vec![0.5, 0.5],
            2.0,
        );
        match drm_solve(&inst, &DrmConfig::default()) {
            Err(DrmError::DegenerateMass { axis: Axis::Row, index: 0 }) => {}
            other => panic!("expected a mass degeneracy, got {other:?}"),
        }
    }

    #[test]
    fn stabilization_preserves_the_iterate() {
        let inst = dense_instance(
            vec![0.0, 1.0, 1.0, 0.0],
            vec![0.5, 0.5],
            vec![0.5, 0.5],
            0.4,
        );
        let eps = 0.25;
        let mut duals = DualPotentials::new(2, 2);
        duals.phi = vec![10f64.exp(), (-3f64).exp()];
        duals.psi = vec![5f64.exp(), 1.0];
        duals.alpha_abs = vec![0.3, -0.1];
        duals.beta_abs = vec![0.0, 0.7];
        let before = recover_plan(&inst, &duals, eps).unwrap();
        let logs: Vec<f64> = (0..2).map(|i| duals.row_log(i, eps)).collect();

        duals.stabilize(eps);
        assert!(duals.phi.iter().chain(&duals.psi).all(|&x| x == 1.0));
        for i in 0..2 {
            assert!((duals.row_log(i, eps) - logs[i]).abs() < 1e-12);
        }
        let after = recover_plan(&inst, &duals, eps).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                let (a, b) = (before.get(i, j), after.get(i, j));
                assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0), "({i},{j}): {a} vs {b}");
            }
        }
    }

    #[test]
    fn converged_duals_are_a_fixed_point_of_both_sweeps() {
        let inst = dense_instance(
            vec![0.0, 1.0, 0.5, 0.2, 0.0, 0.9, 0.7, 0.4, 0.0],
            vec![0.3, 0.3, 0.4],
            vec![0.4, 0.3, 0.3],
            0.25,
        );
        let config = DrmConfig {
            epsilon: 0.05,
            outer_tol: 1e-12,
            newton_tol: 1e-13,
            ..DrmConfig::default()
        };
        let sol = drm_solve(&inst, &config).unwrap();
        assert!(sol.report.converged);

        // replay the converged state and sweep once more: nothing may move
        let mut duals = DualPotentials::new(3, 3);
        let mut probe = DualPotentials::new(3, 3);
        for _ in 0..sol.report.outer_iters + 5 {
            half_sweep_rows(&inst, &mut duals, &config).unwrap();
            half_sweep_cols(&inst, &mut duals, &config).unwrap();
        }
        probe.phi.copy_from_slice(&duals.phi);
        probe.psi.copy_from_slice(&duals.psi);
        probe.alpha_abs.copy_from_slice(&duals.alpha_abs);
        probe.beta_abs.copy_from_slice(&duals.beta_abs);
        half_sweep_rows(&inst, &mut probe, &config).unwrap();
        half_sweep_cols(&inst, &mut probe, &config).unwrap();
        for i in 0..3 {
            let a = duals.row_log(i, config.epsilon);
            let b = probe.row_log(i, config.epsilon);
            assert!((a - b).abs() <= 1e-9 * a.abs().max(1.0), "row {i}: {a} vs {b}");
        }
    }

    #[test]
    fn row_sweeps_are_independent_across_rows() {
        // swapping two rows of the problem swaps the two solved scalings
        let cost = vec![0.0, 1.0, 0.5, 0.3, 0.2, 0.0];
        let swapped = vec![0.3, 0.2, 0.0, 0.0, 1.0, 0.5];
        let a = dense_instance(cost, vec![0.6, 0.4], vec![0.3, 0.3, 0.4], 0.5);
        let b = dense_instance(swapped, vec![0.4, 0.6], vec![0.3, 0.3, 0.4], 0.5);
        let config = DrmConfig { epsilon: 0.1, ..DrmConfig::default() };
        let mut da = DualPotentials::new(2, 3);
        let mut db = DualPotentials::new(2, 3);
        half_sweep_rows(&a, &mut da, &config).unwrap();
        half_sweep_rows(&b, &mut db, &config).unwrap();
        assert!((da.phi[0] - db.phi[1]).abs() <= 1e-12 * da.phi[0]);
        assert!((da.phi[1] - db.phi[0]).abs() <= 1e-12 * da.phi[1]);
    }

    #[test]
    fn capped_instance_tracks_the_exact_solver() {
        let gen = gen_instance(&GenSpec::uniform_1d(6, 2.0, 3)).unwrap();
        let config = DrmConfig { epsilon: 1e-4, ..DrmConfig::default() };
        let sol = drm_solve(&gen.instance, &config).unwrap();
        assert!(sol.report.converged);

        let lp = lp_solve_exact(&gen.instance, &LpConfig::default()).unwrap();
        assert_eq!(lp.status, LpStatus::Optimal);
        let err = relative_error(&sol.plan, &gen.instance, &lp);
        assert!(err.value <= 1e-2, "relative error {} too large", err.value);
        assert!(max_bound_violation(&sol.plan, &gen.instance) <= 1e-12);
        // the dual-change stop leaves a marginal residual amplified by ~1/epsilon
        assert!(sol.report.final_row_residual <= 1e-3);
        assert!(sol.report.final_col_residual <= 1e-3);
    }

    #[test]
    fn lower_bounds_are_folded_and_lifted() {
        let inst = ProblemInstance::new(
            3,
            3,
            CostSpec::Dense {
                matrix: DenseMatrix::new(
                    3,
                    3,
                    vec![0.0, 0.6, 1.0, 0.6, 0.0, 0.6, 1.0, 0.6, 0.0],
                )
                .unwrap(),
            },
            Marginals::new(vec![0.4, 0.3, 0.3], vec![0.3, 0.4, 0.3]).unwrap(),
            CapacityBounds::new(
                BoundSpec::Uniform { value: 0.02 },
                BoundSpec::Uniform { value: 0.3 },
            ),
        )
        .unwrap();
        let config = DrmConfig { epsilon: 1e-4, ..DrmConfig::default() };
        let sol = drm_solve(&inst, &config).unwrap();
        assert!(sol.report.converged);
        // every entry inside [lower, upper], marginals met
        assert!(max_bound_violation(&sol.plan, &inst) <= 1e-12);
        assert!(sol.report.final_row_residual <= 10.0 * config.outer_tol);
        assert!(sol.report.final_col_residual <= 10.0 * config.outer_tol);

        let lp = lp_solve_exact(&inst, &LpConfig::default()).unwrap();
        assert_eq!(lp.status, LpStatus::Optimal);
        let err = relative_error(&sol.plan, &inst, &lp);
        assert!(err.value <= 1e-2, "relative error {} too large", err.value);
    }

    #[test]
    fn tiny_epsilon_needs_stabilization() {
        // off-diagonal mass is forced, so active cells need dual products
        // far beyond floating-point range unless offsets absorb them
        let inst = dense_instance(
            vec![0.0, 1.0, 1.0, 0.0],
            vec![0.5, 0.5],
            vec![0.5, 0.5],
            0.3,
        );
        let stabilized = DrmConfig { epsilon: 1e-4, ..DrmConfig::default() };
        let sol = drm_solve(&inst, &stabilized).unwrap();
        assert!(sol.report.converged);
        assert!(sol.report.final_row_residual <= 10.0 * stabilized.outer_tol);

        let raw = DrmConfig { stabilize: false, ..stabilized };
        match drm_solve(&inst, &raw) {
            Err(DrmError::KernelUnderflow { .. }) => {}
            other => panic!("expected kernel underflow, got {other:?}"),
        }
    }

    #[test]
    fn trace_callback_sees_every_iteration() {
        let gen = gen_instance(&GenSpec::uniform_1d(5, 2.0, 7)).unwrap();
        let config = DrmConfig { epsilon: 1e-3, ..DrmConfig::default() };
        let mut records = Vec::new();
        let mut sink = |r: TraceRecord| records.push(r);
        let sol = drm_solve_traced(&gen.instance, &config, Some(&mut sink)).unwrap();
        assert_eq!(records.len(), sol.report.outer_iters);
        for (k, r) in records.iter().enumerate() {
            assert_eq!(r.iter, k + 1);
            assert!(r.objective.is_finite());
            assert!(r.delta_outer >= 0.0);
            if k > 0 {
                assert!(r.elapsed_s >= records[k - 1].elapsed_s);
            }
        }
        let last = records.last().unwrap();
        assert!(last.delta_outer <= config.outer_tol);
        let final_obj = objective(gen.instance.cost(), &sol.plan);
        assert!((last.objective - final_obj).abs() <= 1e-9 * final_obj.abs().max(1.0));
    }

    #[test]
    fn state_stays_linear_in_the_marginals() {
        let gen = gen_instance(&GenSpec::uniform_1d(40, 3.0, 5)).unwrap();
        let config = DrmConfig { max_outer_iters: 3, ..DrmConfig::default() };
        let sol = drm_solve(&gen.instance, &config).unwrap();
        let (n, m) = (40, 40);
        assert!(sol.report.state_scalars <= 6 * (n + m));
        assert_eq!(sol.report.state_scalars, 3 * n + 3 * m + 2 * n.max(m) + 16);
    }

    #[test]
    fn infeasible_instances_are_refused() {
        let inst = dense_instance(
            vec![0.0, 1.0, 1.0, 0.0],
            vec![0.5, 0.5],
            vec![0.5, 0.5],
            0.2,
        );
        match drm_solve(&inst, &DrmConfig::default()) {
            Err(DrmError::Infeasible(v)) => assert!(!v.is_empty()),
            other => panic!("expected infeasibility, got {other:?}"),
        }
    }

    #[test]
    fn bad_configs_are_refused() {
        let inst = dense_instance(vec![0.0], vec![1.0], vec![1.0], 2.0);
        for config in [
            DrmConfig { epsilon: 0.0, ..DrmConfig::default() },
            DrmConfig { outer_tol: f64::NAN, ..DrmConfig::default() },
            DrmConfig { max_outer_iters: 0, ..DrmConfig::default() },
            DrmConfig { stabilization_threshold: 0.5, ..DrmConfig::default() },
        ] {
            assert!(matches!(drm_solve(&inst, &config), Err(DrmError::Config { .. })));
        }
    }
}
