use std::time::Instant;

use cot_core::{
    lift_plan, marginal_residuals, reduce_to_upper_bounded, validate_feasibility, DenseMatrix,
    ProblemInstance, SolveReport, StopReason, TraceRecord, TransportPlan,
};

use crate::projections::{kl_project_box, kl_project_cols, kl_project_rows, DykstraState};
use crate::{IbpError, Result};

/// Buffers the cycle keeps alive (plan, corrections, previous plan) plus
/// the column-projection scratch and loop locals.
const STATE_OVERHEAD: usize = 16;

#[derive(Debug, Clone)]
pub struct IbpConfig {
    /// Entropic regularization weight.
    pub epsilon: f64,
    /// Relative l1 plan change per full cycle below which the run stops.
    pub outer_tol: f64,
    pub max_outer_iters: usize,
    /// Refuse instances with more than this many plan cells; the iterate
    /// is dense, so memory grows with N*M regardless of cost structure.
    pub max_cells: usize,
}

impl Default for IbpConfig {
    fn default() -> Self {
        Self { epsilon: 1e-3, outer_tol: 1e-5, max_outer_iters: 100_000, max_cells: 50_000_000 }
    }
}

fn check_config(config: &IbpConfig) -> Result<()> {
    let bad = |reason: String| Err(IbpError::Config { reason });
    if !(config.epsilon > 0.0 && config.epsilon.is_finite()) {
        return bad(format!("epsilon must be positive and finite, got {}", config.epsilon));
    }
    if !(config.outer_tol > 0.0 && config.outer_tol.is_finite()) {
        return bad(format!("outer_tol must be positive and finite, got {}", config.outer_tol));
    }
    if config.max_outer_iters == 0 {
        return bad("max_outer_iters must be at least 1".into());
    }
    if config.max_cells == 0 {
        return bad("max_cells must be at least 1".into());
    }
    Ok(())
}

/// Gibbs kernel of the cost at `epsilon`, shifted in the log domain so every
/// row and column carries at least one entry of exactly 1: subtracting the
/// row minima and then the residual column minima keeps all exponents
/// nonpositive. Zero-capacity cells start (and stay) at zero.
fn shifted_kernel(instance: &ProblemInstance, epsilon: f64) -> DenseMatrix {
    let n = instance.n();
    let m = instance.m();
    let cost = instance.cost();
    let mut row_shift = vec![f64::INFINITY; n];
    for i in 0..n {
        for j in 0..m {
            row_shift[i] = row_shift[i].min(cost.value(i, j));
        }
    }
    let mut col_shift = vec![f64::INFINITY; m];
    for j in 0..m {
        for i in 0..n {
            col_shift[j] = col_shift[j].min(cost.value(i, j) - row_shift[i]);
        }
    }
    let mut kernel = DenseMatrix::zeros(n, m);
    for i in 0..n {
        for j in 0..m {
            if instance.upper(i, j) == 0.0 {
                continue;
            }
            let exponent = -(cost.value(i, j) - row_shift[i] - col_shift[j]) / epsilon;
            kernel.set(i, j, exponent.exp());
        }
    }
    kernel
}

fn streamed_stats(
    plan: &DenseMatrix,
    instance: &ProblemInstance,
) -> (f64, f64, f64) {
    let n = plan.rows();
    let m = plan.cols();
    let cost = instance.cost();
    let mut rows = vec![0.0; n];
    let mut cols = vec![0.0; m];
    let mut objective = 0.0;
    for i in 0..n {
        for j in 0..m {
            let g = plan.get(i, j);
            rows[i] += g;
            cols[j] += g;
            objective += g * cost.value(i, j);
        }
    }
    let row_res =
        rows.iter().zip(instance.u()).map(|(r, u)| (r - u).abs()).fold(0.0, f64::max);
    let col_res =
        cols.iter().zip(instance.v()).map(|(c, v)| (c - v).abs()).fold(0.0, f64::max);
    (row_res, col_res, objective)
}

#[derive(Debug, Clone)]
pub struct IbpSolution {
    pub plan: TransportPlan,
    pub report: SolveReport,
}

pub fn ibp_solve(instance: &ProblemInstance, config: &IbpConfig) -> Result<IbpSolution> {
    ibp_solve_traced(instance, config, None)
}

/// Full solve with an optional per-iteration trace callback. One trace
/// record is emitted after each complete rows -> cols -> box cycle.
pub fn ibp_solve_traced(
    instance: &ProblemInstance,
    config: &IbpConfig,
    mut trace: Option<&mut dyn FnMut(TraceRecord)>,
) -> Result<IbpSolution> {
    let start = Instant::now();
    check_config(config)?;
    let cells = instance.n() * instance.m();
    if cells > config.max_cells {
        return Err(IbpError::MemoryCap { cells, cap: config.max_cells });
    }
    let violations = validate_feasibility(instance);
    if !violations.is_empty() {
        return Err(IbpError::Infeasible(violations));
    }

    // Same lower-bound folding as the Newton solver: project on the reduced
    // box at k * epsilon, lift the result back through the affine map.
    let (reduced, record) = reduce_to_upper_bounded(instance)?;
    let k = record.k_theta();
    let epsilon = config.epsilon * k;
    let fixed_cost = record.fixed_cost(instance.cost());

    let n = reduced.n();
    let m = reduced.m();
    let mut state = DykstraState::new(shifted_kernel(&reduced, epsilon))?;
    let mut prev = state.plan().clone();
    let state_scalars = 3 * n * m + 2 * m + STATE_OVERHEAD;

    let mut history: Vec<f64> = Vec::new();
    let mut converged = false;
    let mut iters_done = 0usize;

    for iter in 1..=config.max_outer_iters {
        iters_done = iter;
        kl_project_rows(&mut state, reduced.u())?;
        kl_project_cols(&mut state, reduced.v())?;
        kl_project_box(&mut state, reduced.bounds().upper());

        let mut num = 0.0;
        let mut den = 0.0;
        for (new, old) in state.plan().data().iter().zip(prev.data()) {
            num += (new - old).abs();
            den += old.abs();
        }
        let delta = num / den.max(f64::MIN_POSITIVE);
        prev.data_mut().copy_from_slice(state.plan().data());

        history.push(delta);
        if let Some(cb) = trace.as_mut() {
            let (row_res, col_res, reduced_objective) = streamed_stats(state.plan(), &reduced);
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

    let reduced_plan = TransportPlan::new(state.into_plan())?;
    let plan = lift_plan(&reduced_plan, &record)?;
    let (final_row_residual, final_col_residual) =
        marginal_residuals(&plan, instance.marginals());
    let report = SolveReport {
        outer_iters: iters_done,
        converged,
        stop_reason: if converged { StopReason::Tolerance } else { StopReason::MaxIters },
        outer_residual_history: history,
        total_newton_iters: 0,
        wall_time_s: start.elapsed().as_secs_f64(),
        final_row_residual,
        final_col_residual,
        state_scalars,
    };
    Ok(IbpSolution { plan, report })
}

#[cfg(test)]
mod tests {
    use super::*;
    use cot_core::{
        max_bound_violation, BoundSpec, CapacityBounds, CostSpec, Marginals,
    };

    fn capped_instance(eta: f64) -> ProblemInstance {
        ProblemInstance::new(
            2,
            2,
            CostSpec::Dense {
                matrix: DenseMatrix::new(2, 2, vec![0.0, 1.0, 1.0, 0.0]).unwrap(),
            },
            Marginals::new(vec![0.5, 0.5], vec![0.5, 0.5]).unwrap(),
            CapacityBounds::upper_only(BoundSpec::Uniform { value: eta }),
        )
        .unwrap()
    }

    #[test]
    fn shifted_kernel_peaks_at_one() {
        let inst = capped_instance(1.0);
        let kernel = shifted_kernel(&inst, 1e-3);
        // every row and column carries an exact 1 despite exp(-1000) terms
        for i in 0..2 {
            let best = kernel.row(i).iter().fold(0.0f64, |a, &b| a.max(b));
            assert_eq!(best, 1.0);
        }
        for j in 0..2 {
            let best = kernel.get(0, j).max(kernel.get(1, j));
            assert_eq!(best, 1.0);
        }
        for &x in kernel.data() {
            assert!(x <= 1.0);
        }
    }

    #[test]
    fn binding_box_hits_the_capped_optimum() {
        // diagonal capped at 0.3 forces 0.2 onto each off-diagonal cell;
        // epsilon is kept large enough that the off-diagonal kernel entries
        // start within a few orders of the final mass, otherwise the
        // plan-change stop fires while they are still being pumped up
        let inst = capped_instance(0.3);
        let config = IbpConfig { epsilon: 0.15, ..IbpConfig::default() };
        let sol = ibp_solve(&inst, &config).unwrap();
        assert!(sol.report.converged);
        assert!(max_bound_violation(&sol.plan, &inst) <= 1e-12);
        assert!((sol.plan.get(0, 0) - 0.3).abs() <= 1e-2);
        assert!((sol.plan.get(0, 1) - 0.2).abs() <= 1e-2);
        assert!(sol.report.final_row_residual <= 1e-3);
    }

    #[test]
    fn underflowed_cells_stall_with_honest_residuals() {
        // at epsilon = 1e-3 the off-diagonal kernel entries are exactly
        // zero, so the needed 0.2 per off-diagonal cell can never arrive:
        // the cycle reaches a fixed point (delta 0) and the report carries
        // the unmet marginals instead of hiding them
        let inst = capped_instance(0.3);
        let config = IbpConfig { epsilon: 1e-3, ..IbpConfig::default() };
        let sol = ibp_solve(&inst, &config).unwrap();
        assert!(sol.report.converged);
        assert!(sol.report.final_row_residual >= 0.1);
    }

    #[test]
    fn inactive_box_reduces_to_plain_sinkhorn() {
        let inst = capped_instance(1.0);
        let epsilon = 0.05;
        let config = IbpConfig {
            epsilon,
            outer_tol: 1e-30,
            max_outer_iters: 25,
            ..IbpConfig::default()
        };
        let sol = ibp_solve(&inst, &config).unwrap();

        // reference: same shifted kernel, alternating row/col scalings only,
        // run for exactly as many cycles as the solver took
        let mut reference = shifted_kernel(&inst, epsilon);
        for _ in 0..sol.report.outer_iters {
            for i in 0..2 {
                let total: f64 = reference.row(i).iter().sum();
                let scale = inst.u()[i] / total;
                for j in 0..2 {
                    reference.set(i, j, reference.get(i, j) * scale);
                }
            }
            for j in 0..2 {
                let total = reference.get(0, j) + reference.get(1, j);
                let scale = inst.v()[j] / total;
                for i in 0..2 {
                    reference.set(i, j, reference.get(i, j) * scale);
                }
            }
        }
        for i in 0..2 {
            for j in 0..2 {
                assert!((sol.plan.get(i, j) - reference.get(i, j)).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn lower_bounds_are_folded_and_lifted() {
        let inst = ProblemInstance::new(
            2,
            2,
            CostSpec::Dense {
                matrix: DenseMatrix::new(2, 2, vec![0.0, 1.0, 1.0, 0.0]).unwrap(),
            },
            Marginals::new(vec![0.5, 0.5], vec![0.5, 0.5]).unwrap(),
            CapacityBounds::new(
                BoundSpec::Uniform { value: 0.1 },
                BoundSpec::Uniform { value: 0.35 },
            ),
        )
        .unwrap();
        let config = IbpConfig { epsilon: 0.15, ..IbpConfig::default() };
        let sol = ibp_solve(&inst, &config).unwrap();
        assert!(sol.report.converged);
        assert!(max_bound_violation(&sol.plan, &inst) <= 1e-12);
        for i in 0..2 {
            for j in 0..2 {
                assert!(sol.plan.get(i, j) >= 0.1 - 1e-12);
            }
        }
        // reduced optimum saturates the cap; lifted back this is
        // [[0.35, 0.15], [0.15, 0.35]]
        assert!((sol.plan.get(0, 0) - 0.35).abs() <= 1e-2);
        assert!((sol.plan.get(0, 1) - 0.15).abs() <= 1e-2);
        assert!(sol.report.final_row_residual <= 1e-3);
    }

    #[test]
    fn state_is_quadratic_in_the_instance_size() {
        let inst = capped_instance(0.4);
        let config = IbpConfig { epsilon: 1e-2, ..IbpConfig::default() };
        let sol = ibp_solve(&inst, &config).unwrap();
        assert!(sol.report.state_scalars >= 3 * 4);
        assert_eq!(sol.report.state_scalars, 3 * 4 + 2 * 2 + STATE_OVERHEAD);
    }

    #[test]
    fn cell_cap_is_enforced() {
        let inst = capped_instance(0.4);
        let config = IbpConfig { max_cells: 3, ..IbpConfig::default() };
        match ibp_solve(&inst, &config) {
            Err(IbpError::MemoryCap { cells, cap }) => {
                assert_eq!(cells, 4);
                assert_eq!(cap, 3);
            }
            other => panic!("expected MemoryCap, got {other:?}"),
        }
    }

    #[test]
    fn infeasible_instances_are_refused() {
        let inst = capped_instance(0.2);
        match ibp_solve(&inst, &IbpConfig::default()) {
            Err(IbpError::Infeasible(violations)) => assert!(!violations.is_empty()),
            other => panic!("expected Infeasible, got {other:?}"),
        }
    }

    #[test]
    fn iteration_budget_is_reported_honestly() {
        let inst = capped_instance(0.3);
        let config = IbpConfig { epsilon: 0.15, max_outer_iters: 3, ..IbpConfig::default() };
        let sol = ibp_solve(&inst, &config).unwrap();
        assert!(!sol.report.converged);
        assert_eq!(sol.report.stop_reason, StopReason::MaxIters);
        assert_eq!(sol.report.outer_iters, 3);
        assert_eq!(sol.report.outer_residual_history.len(), 3);
    }

    #[test]
    fn trace_callback_sees_every_cycle() {
        let inst = capped_instance(0.3);
        let config = IbpConfig { epsilon: 1e-2, ..IbpConfig::default() };
        let mut records = Vec::new();
        let mut cb = |r: TraceRecord| records.push(r);
        let sol = ibp_solve_traced(&inst, &config, Some(&mut cb)).unwrap();
        assert_eq!(records.len(), sol.report.outer_iters);
        for (pos, r) in records.iter().enumerate() {
            assert_eq!(r.iter, pos + 1);
            assert!(r.objective.is_finite());
            assert_eq!(r.delta_outer, sol.report.outer_residual_history[pos]);
        }
    }

    #[test]
    fn bad_configs_are_refused() {
        let inst = capped_instance(0.4);
        for config in [
            IbpConfig { epsilon: 0.0, ..IbpConfig::default() },
            IbpConfig { outer_tol: -1.0, ..IbpConfig::default() },
            IbpConfig { max_outer_iters: 0, ..IbpConfig::default() },
            IbpConfig { max_cells: 0, ..IbpConfig::default() },
        ] {
            assert!(matches!(ibp_solve(&inst, &config), Err(IbpError::Config { .. })));
        }
    }
}
