use crate::{tolerances, ProblemInstance};

/// A violated necessary feasibility condition. Violations are data, not
/// faults: callers decide whether to abort, repair, or resample.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    /// `sum(u)` and `sum(v)` disagree.
    MassImbalance { u_total: f64, v_total: f64 },
    /// Row `i` must receive at least its lower-bound mass: `u_i >= sum_j lower_ij`.
    RowLower { i: usize, u_i: f64, lower_row_sum: f64 },
    /// Row `i` cannot exceed its capacity: `u_i <= sum_j upper_ij`.
    RowUpper { i: usize, u_i: f64, upper_row_sum: f64 },
    /// Column analogue of `RowLower`.
    ColLower { j: usize, v_j: f64, lower_col_sum: f64 },
    /// Column analogue of `RowUpper`.
    ColUpper { j: usize, v_j: f64, upper_col_sum: f64 },
    /// Bounds out of order at a cell: `lower_ij > upper_ij`.
    BoundOrder { i: usize, j: usize, lower: f64, upper: f64 },
    /// Negative lower bound at a cell.
    NegativeLower { i: usize, j: usize, lower: f64 },
}

/// Checks the necessary feasibility conditions within
/// [`tolerances::FEASIBILITY`]: mass balance, `lower 1 <= u <= upper 1`,
/// `lower^T 1 <= v <= upper^T 1`, and `0 <= lower <= upper` cellwise.
///
/// An empty result means no necessary condition is violated; whether a
/// feasible plan actually exists is settled exactly by the LP oracle.
pub fn validate_feasibility(instance: &ProblemInstance) -> Vec<Violation> {
    let tol = tolerances::FEASIBILITY;
    let (n, m) = (instance.n(), instance.m());
    let mut violations = Vec::new();

    let u_total: f64 = instance.u().iter().sum();
    let v_total: f64 = instance.v().iter().sum();
    if (u_total - v_total).abs() > tol {
        violations.push(Violation::MassImbalance { u_total, v_total });
    }

    let lower = instance.bounds().lower();
    let upper = instance.bounds().upper();

    let lower_rows = lower.row_sums(n, m);
    let upper_rows = upper.row_sums(n, m);
    for i in 0..n {
        let u_i = instance.u()[i];
        if u_i < lower_rows[i] - tol {
            violations.push(Violation::RowLower { i, u_i, lower_row_sum: lower_rows[i] });
        }
        if u_i > upper_rows[i] + tol {
            violations.push(Violation::RowUpper { i, u_i, upper_row_sum: upper_rows[i] });
        }
    }

    let lower_cols = lower.col_sums(n, m);
    let upper_cols = upper.col_sums(n, m);
    for j in 0..m {
        let v_j = instance.v()[j];
        if v_j < lower_cols[j] - tol {
            violations.push(Violation::ColLower { j, v_j, lower_col_sum: lower_cols[j] });
        }
        if v_j > upper_cols[j] + tol {
            violations.push(Violation::ColUpper { j, v_j, upper_col_sum: upper_cols[j] });
        }
    }

    for i in 0..n {
        for j in 0..m {
            let lo = lower.value(i, j);
            let hi = upper.value(i, j);
            if lo < -tol {
                violations.push(Violation::NegativeLower { i, j, lower: lo });
            }
            if lo > hi + tol {
                violations.push(Violation::BoundOrder { i, j, lower: lo, upper: hi });
            }
        }
    }

    violations
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::{BoundSpec, CapacityBounds, CostSpec, DenseMatrix, Marginals, ProblemInstance};

    fn instance_with_uniform_upper(upper: f64) -> ProblemInstance {
        ProblemInstance::new(
            2,
            2,
            CostSpec::Dense {
                matrix: DenseMatrix::new(2, 2, vec![0.0, 1.0, 1.0, 0.0]).unwrap(),
            },
            Marginals::new(vec![0.5, 0.5], vec![0.5, 0.5]).unwrap(),
            CapacityBounds::upper_only(BoundSpec::Uniform { value: upper }),
        )
        .unwrap()
    }

    #[test]
    fn trivial_instance_is_ok() {
        let inst = ProblemInstance::new(
            1,
            1,
            CostSpec::Grid1d { h: 1.0 },
            Marginals::new(vec![1.0], vec![1.0]).unwrap(),
            CapacityBounds::upper_only(BoundSpec::Uniform { value: 1.0 }),
        )
        .unwrap();
        assert!(validate_feasibility(&inst).is_empty());
    }

    #[test]
    fn undersized_capacity_flags_every_row_and_column() {
        // each row can hold at most 0.2 but must carry 0.5
        let inst = instance_with_uniform_upper(0.1);
        let violations = validate_feasibility(&inst);
        let rows: Vec<usize> = violations
            .iter()
            .filter_map(|v| match v {
                Violation::RowUpper { i, .. } => Some(*i),
                _ => None,
            })
            .collect();
        let cols: Vec<usize> = violations
            .iter()
            .filter_map(|v| match v {
                Violation::ColUpper { j, .. } => Some(*j),
                _ => None,
            })
            .collect();
        assert_eq!(rows, vec![0, 1]);
        assert_eq!(cols, vec![0, 1]);
    }

    #[test]
    fn ample_capacity_is_ok() {
        let inst = instance_with_uniform_upper(0.3);
        assert!(validate_feasibility(&inst).is_empty());
    }

    #[test]
    fn lower_bound_order_and_sums_checked() {
        let inst = ProblemInstance::new(
            2,
            2,
            CostSpec::Grid1d { h: 1.0 },
            Marginals::new(vec![0.5, 0.5], vec![0.5, 0.5]).unwrap(),
            CapacityBounds::new(
                BoundSpec::Uniform { value: 0.4 },
                BoundSpec::Uniform { value: 0.3 },
            ),
        )
        .unwrap();
        let violations = validate_feasibility(&inst);
        // rows and columns each demand 0.8 of lower-bound mass against 0.5,
        // and every cell has lower > upper
        assert!(violations.iter().any(|v| matches!(v, Violation::RowLower { .. })));
        assert!(violations.iter().any(|v| matches!(v, Violation::BoundOrder { .. })));
    }
}
