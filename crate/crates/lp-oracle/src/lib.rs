//! Exact oracle for capacity-constrained transportation.
//!
//! Solves `min <C, gamma>` over `lower <= gamma <= upper`, `gamma 1 = u`,
//! `gamma^T 1 = v` with a two-phase network simplex, certifying optimality
//! through a weak-duality gap. Intended for ground truth at desk scale, so
//! instance size is capped by configuration rather than ambition.

mod simplex;

pub use simplex::{
    lp_solve_exact, relative_error, relative_error_from_objectives, ErrorMetric, LpSolution,
};

use cot_core::Violation;

/// Oracle configuration. `max_pivots = 0` means "pick a budget from the
/// instance size".
#[derive(Debug, Clone)]
pub struct LpConfig {
    /// Refuse instances with more than this many cells (`n * m`).
    pub max_cells: usize,
    pub max_pivots: usize,
    /// Optimality is certified only when the duality gap is at most this.
    pub gap_tolerance: f64,
}

impl Default for LpConfig {
    fn default() -> Self {
        Self {
            max_cells: 10_000,
            max_pivots: 0,
            gap_tolerance: cot_core::tolerances::LP_CERTIFICATE,
        }
    }
}

/// Terminal state of a solve.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    /// No feasible plan exists even though the necessary per-row/column
    /// conditions hold. The listed rows and columns could not route their
    /// mass within the capacities.
    Infeasible { unmet_rows: Vec<usize>, unmet_cols: Vec<usize> },
    IterationLimit,
}

#[derive(Debug, thiserror::Error)]
pub enum LpError {
    #[error("instance has {cells} cells, above the configured cap of {cap}")]
    SizeCap { cells: usize, cap: usize },

    #[error("instance fails necessary feasibility conditions ({} violations)", .0.len())]
    InvalidInstance(Vec<Violation>),

    #[error("optimum found but certificate gap {gap} exceeds {tol}")]
    CertificateFailed { gap: f64, tol: f64 },

    #[error("numerical failure in simplex: {0}")]
    Numerical(String),

    #[error(transparent)]
    Core(#[from] cot_core::CoreError),
}

#[cfg(test)]
mod tests {
    use super::*;
    use cot_core::{
        marginal_residuals, max_bound_violation, BoundSpec, CapacityBounds, CostSpec, DenseMatrix,
        Marginals, ProblemInstance,
    };

    fn solve(instance: &ProblemInstance) -> LpSolution {
        lp_solve_exact(instance, &LpConfig::default()).unwrap()
    }

    fn dense_instance(
        u: Vec<f64>,
        v: Vec<f64>,
        cost: Vec<f64>,
        upper: BoundSpec,
    ) -> ProblemInstance {
        let n = u.len();
        let m = v.len();
        ProblemInstance::new(
            n,
            m,
            CostSpec::Dense { matrix: DenseMatrix::new(n, m, cost).unwrap() },
            Marginals::new(u, v).unwrap(),
            CapacityBounds::upper_only(upper),
        )
        .unwrap()
    }

    #[test]
    fn single_cell() {
        let inst = dense_instance(
            vec![1.0],
            vec![1.0],
            vec![0.7],
            BoundSpec::Uniform { value: 1.0 },
        );
        let sol = solve(&inst);
        assert_eq!(sol.status, LpStatus::Optimal);
        assert!((sol.plan.get(0, 0) - 1.0).abs() < 1e-12);
        assert!((sol.objective - 0.7).abs() < 1e-12);
    }

    #[test]
    fn uncapped_swap_cost_picks_diagonal() {
        let inst = dense_instance(
            vec![0.5, 0.5],
            vec![0.5, 0.5],
            vec![0.0, 1.0, 1.0, 0.0],
            BoundSpec::Uniform { value: 1.0 },
        );
        let sol = solve(&inst);
        assert_eq!(sol.status, LpStatus::Optimal);
        assert!(sol.objective.abs() < 1e-12);
        assert!((sol.plan.get(0, 0) - 0.5).abs() < 1e-12);
        assert!((sol.plan.get(1, 1) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn capacity_forces_off_diagonal_mass() {
        // diagonal capped at 0.3: each row spills 0.2 onto the costly cell.
        // optimal plan [[0.3, 0.2], [0.2, 0.3]], objective 0.4.
        let inst = dense_instance(
            vec![0.5, 0.5],
            vec![0.5, 0.5],
            vec![0.0, 1.0, 1.0, 0.0],
            BoundSpec::Uniform { value: 0.3 },
        );
        let sol = solve(&inst);
        assert_eq!(sol.status, LpStatus::Optimal);
        let expect = [[0.3, 0.2], [0.2, 0.3]];
        for i in 0..2 {
            for j in 0..2 {
                assert!((sol.plan.get(i, j) - expect[i][j]).abs() < 1e-12);
            }
        }
        assert!((sol.objective - 0.4).abs() < 1e-12);
        assert!(sol.duality_gap <= 1e-9);
    }

    #[test]
    fn optimal_plans_are_feasible() {
        let inst = dense_instance(
            vec![0.2, 0.3, 0.5],
            vec![0.4, 0.4, 0.2],
            vec![0.0, 2.0, 1.5, 2.0, 0.0, 1.0, 1.0, 2.0, 0.0],
            BoundSpec::Uniform { value: 0.25 },
        );
        let sol = solve(&inst);
        assert_eq!(sol.status, LpStatus::Optimal);
        let (row, col) = marginal_residuals(&sol.plan, inst.marginals());
        assert!(row < 1e-9 && col < 1e-9);
        assert!(max_bound_violation(&sol.plan, &inst) < 1e-12);
        assert!(sol.duality_gap <= 1e-9);
    }

    #[test]
    fn hidden_cut_detected_as_infeasible() {
        // necessary row/column conditions hold, but rows 0 and 1 jointly
        // hold 2/3 of the mass and can reach at most 0.373 of capacity
        let z = 0.01;
        let t = 1.0 / 3.0;
        let inst = dense_instance(
            vec![t, t, t],
            vec![t, t, t],
            vec![0.0; 9],
            BoundSpec::Dense {
                matrix: DenseMatrix::new(3, 3, vec![t, z, z, t, z, z, t, t, t]).unwrap(),
            },
        );
        assert!(cot_core::validate_feasibility(&inst).is_empty());
        let sol = solve(&inst);
        match sol.status {
            LpStatus::Infeasible { ref unmet_rows, ref unmet_cols } => {
                assert!(!unmet_rows.is_empty() || !unmet_cols.is_empty());
            }
            ref other => panic!("expected infeasible, got {other:?}"),
        }
    }

    #[test]
    fn plainly_undersized_instance_is_invalid() {
        let inst = dense_instance(
            vec![0.5, 0.5],
            vec![0.5, 0.5],
            vec![0.0; 4],
            BoundSpec::Uniform { value: 0.1 },
        );
        assert!(matches!(
            lp_solve_exact(&inst, &LpConfig::default()),
            Err(LpError::InvalidInstance(_))
        ));
    }

    #[test]
    fn size_cap_enforced() {
        let inst = dense_instance(
            vec![0.5, 0.5],
            vec![0.5, 0.5],
            vec![0.0; 4],
            BoundSpec::Uniform { value: 1.0 },
        );
        let config = LpConfig { max_cells: 3, ..LpConfig::default() };
        assert!(matches!(
            lp_solve_exact(&inst, &config),
            Err(LpError::SizeCap { cells: 4, cap: 3 })
        ));
    }

    #[test]
    fn pivot_budget_reports_iteration_limit() {
        let inst = dense_instance(
            vec![0.2, 0.3, 0.5],
            vec![0.4, 0.4, 0.2],
            vec![0.0, 2.0, 1.5, 2.0, 0.0, 1.0, 1.0, 2.0, 0.0],
            BoundSpec::Uniform { value: 0.25 },
        );
        let config = LpConfig { max_pivots: 1, ..LpConfig::default() };
        let sol = lp_solve_exact(&inst, &config).unwrap();
        assert_eq!(sol.status, LpStatus::IterationLimit);
    }

    #[test]
    fn relative_error_basics() {
        let m = relative_error_from_objectives(1.1, 1.0);
        assert!(!m.absolute);
        assert!((m.value - 0.1).abs() < 1e-12);

        let same = relative_error_from_objectives(0.4, 0.4);
        assert_eq!(same.value, 0.0);

        let zero_oracle = relative_error_from_objectives(0.05, 0.0);
        assert!(zero_oracle.absolute);
        assert!((zero_oracle.value - 0.05).abs() < 1e-15);
    }
}
