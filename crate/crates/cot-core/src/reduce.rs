use crate::plan::TransportPlan;
use crate::problem::{BoundSpec, CapacityBounds, CostSpec, Marginals, ProblemInstance};
use crate::validate::validate_feasibility;
use crate::{CoreError, DenseMatrix, Result};

/// What [`reduce_to_upper_bounded`] did, kept so plans and objectives can be
/// mapped back. `k_theta = 1 - sum(lower)` is the free mass left after the
/// lower bound is paid.
#[derive(Debug, Clone)]
pub struct ReductionRecord {
    k_theta: f64,
    theta: BoundSpec,
    n: usize,
    m: usize,
}

impl ReductionRecord {
    pub fn k_theta(&self) -> f64 {
        self.k_theta
    }

    pub fn theta(&self) -> &BoundSpec {
        &self.theta
    }

    /// `<C, theta>`: the fixed cost carried by the lower bound. Adding this
    /// to the reduced objective recovers the original objective.
    pub fn fixed_cost(&self, cost: &CostSpec) -> f64 {
        if self.theta.is_zero() {
            return 0.0;
        }
        let mut total = 0.0;
        for i in 0..self.n {
            for j in 0..self.m {
                total += cost.value(i, j) * self.theta.value(i, j);
            }
        }
        total
    }
}

/// Rewrites an instance with nonzero lower bounds into an equivalent one
/// with `lower = 0`:
///
/// ```text
/// k      = 1 - sum(theta)            (must stay positive)
/// cost'  = k * cost
/// upper' = (upper - theta) / k
/// u'_i   = (u_i - sum_j theta_ij) / k,   v'_j analogous
/// ```
///
/// A plan `gamma'` of the reduced instance maps back through
/// [`lift_plan`] as `gamma = k * gamma' + theta`, and objectives relate by
/// `<cost, gamma> = <cost', gamma'> + <cost, theta>`. Entropy-regularized
/// problems correspond under the same map when the regularization strength
/// is also scaled by `k`.
///
/// With `lower = 0` everywhere the instance is returned unchanged
/// (`k_theta = 1`).
pub fn reduce_to_upper_bounded(
    instance: &ProblemInstance,
) -> Result<(ProblemInstance, ReductionRecord)> {
    let (n, m) = (instance.n(), instance.m());
    let theta = instance.bounds().lower().clone();

    if theta.is_zero() {
        let record = ReductionRecord { k_theta: 1.0, theta: BoundSpec::zero(), n, m };
        return Ok((instance.clone(), record));
    }

    let violations = validate_feasibility(instance);
    if !violations.is_empty() {
        return Err(CoreError::Infeasible(violations));
    }

    let theta_rows = theta.row_sums(n, m);
    let theta_cols = theta.col_sums(n, m);
    let theta_total: f64 = theta_rows.iter().sum();
    let k = 1.0 - theta_total;
    if k <= 0.0 {
        return Err(CoreError::NonpositiveScale { k_theta: k });
    }

    let u: Vec<f64> =
        instance.u().iter().zip(&theta_rows).map(|(&ui, &ti)| ((ui - ti) / k).max(0.0)).collect();
    let v: Vec<f64> =
        instance.v().iter().zip(&theta_cols).map(|(&vj, &tj)| ((vj - tj) / k).max(0.0)).collect();

    let upper = instance.bounds().upper();
    let reduced_upper = match (upper, &theta) {
        (BoundSpec::Uniform { value: hi }, BoundSpec::Uniform { value: lo }) => {
            BoundSpec::Uniform { value: (hi - lo) / k }
        }
        _ => {
            let mut matrix = DenseMatrix::zeros(n, m);
            for i in 0..n {
                for j in 0..m {
                    matrix.set(i, j, (upper.value(i, j) - theta.value(i, j)) / k);
                }
            }
            BoundSpec::Dense { matrix }
        }
    };

    let reduced = instance.rebuild(
        instance.cost().scaled(k),
        Marginals::new(u, v)?,
        CapacityBounds::upper_only(reduced_upper),
    )?;
    Ok((reduced, ReductionRecord { k_theta: k, theta, n, m }))
}

/// Maps a plan of the reduced instance back to the original:
/// `gamma = k_theta * gamma' + theta`.
pub fn lift_plan(plan: &TransportPlan, record: &ReductionRecord) -> Result<TransportPlan> {
    if plan.n() != record.n || plan.m() != record.m {
        return Err(CoreError::DimensionMismatch {
            context: "lift plan shape",
            expected: record.n * record.m,
            got: plan.n() * plan.m(),
        });
    }
    let mut gamma = DenseMatrix::zeros(record.n, record.m);
    for i in 0..record.n {
        for j in 0..record.m {
            gamma.set(i, j, record.k_theta * plan.get(i, j) + record.theta.value(i, j));
        }
    }
    TransportPlan::new(gamma)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::validate::validate_feasibility;

    fn instance(u: Vec<f64>, v: Vec<f64>, lower: BoundSpec, upper: BoundSpec) -> ProblemInstance {
        let n = u.len();
        let m = v.len();
        ProblemInstance::new(
            n,
            m,
            CostSpec::Grid1d { h: 1.0 },
            Marginals::new(u, v).unwrap(),
            CapacityBounds::new(lower, upper),
        )
        .unwrap()
    }

    #[test]
    fn zero_lower_bound_is_identity() {
        let inst = instance(
            vec![0.5, 0.5],
            vec![0.5, 0.5],
            BoundSpec::zero(),
            BoundSpec::Uniform { value: 0.4 },
        );
        let (reduced, record) = reduce_to_upper_bounded(&inst).unwrap();
        assert_eq!(record.k_theta(), 1.0);
        assert_eq!(reduced, inst);
    }

    #[test]
    fn uniform_lower_bound_transform() {
        // theta = 0.1 per cell on 2x2: row sums 0.2, total 0.4, k = 0.6.
        let inst = instance(
            vec![0.6, 0.4],
            vec![0.5, 0.5],
            BoundSpec::Uniform { value: 0.1 },
            BoundSpec::Uniform { value: 0.4 },
        );
        let (reduced, record) = reduce_to_upper_bounded(&inst).unwrap();
        assert!((record.k_theta() - 0.6).abs() < 1e-15);

        // u' = (u - 0.2) / 0.6
        assert!((reduced.u()[0] - 2.0 / 3.0).abs() < 1e-12);
        assert!((reduced.u()[1] - 1.0 / 3.0).abs() < 1e-12);
        assert!((reduced.v()[0] - 0.5).abs() < 1e-12);

        // upper' = (0.4 - 0.1) / 0.6 = 0.5
        assert!((reduced.upper(0, 0) - 0.5).abs() < 1e-12);
        assert_eq!(reduced.lower(1, 1), 0.0);

        // cost' = 0.6 * cost; grid spacing scales by sqrt(0.6)
        assert!((reduced.cost().value(0, 1) - 0.6).abs() < 1e-12);

        // the reduced instance is itself feasible
        assert!(validate_feasibility(&reduced).is_empty());
    }

    #[test]
    fn reduction_needs_free_mass() {
        // theta total = 1.0 leaves k = 0
        let inst = instance(
            vec![0.5, 0.5],
            vec![0.5, 0.5],
            BoundSpec::Uniform { value: 0.25 },
            BoundSpec::Uniform { value: 0.5 },
        );
        assert!(matches!(
            reduce_to_upper_bounded(&inst),
            Err(CoreError::NonpositiveScale { .. })
        ));
    }

    #[test]
    fn lift_restores_plan() {
        // k = 0.6, theta = 0.1: gamma' = [[2/3, 0], [0, 1/3]]
        // lifts to [[0.5, 0.1], [0.1, 0.3]]
        let record = ReductionRecord {
            k_theta: 0.6,
            theta: BoundSpec::Uniform { value: 0.1 },
            n: 2,
            m: 2,
        };
        let reduced_plan = TransportPlan::new(
            DenseMatrix::new(2, 2, vec![2.0 / 3.0, 0.0, 0.0, 1.0 / 3.0]).unwrap(),
        )
        .unwrap();
        let lifted = lift_plan(&reduced_plan, &record).unwrap();
        let expect = [[0.5, 0.1], [0.1, 0.3]];
        for i in 0..2 {
            for j in 0..2 {
                assert!((lifted.get(i, j) - expect[i][j]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn identity_lift_for_trivial_record() {
        let record =
            ReductionRecord { k_theta: 1.0, theta: BoundSpec::zero(), n: 1, m: 1 };
        let plan = TransportPlan::new(DenseMatrix::new(1, 1, vec![1.0]).unwrap()).unwrap();
        let lifted = lift_plan(&plan, &record).unwrap();
        assert_eq!(lifted.get(0, 0), 1.0);
    }

    #[test]
    fn fixed_cost_matches_direct_sum() {
        let record = ReductionRecord {
            k_theta: 0.6,
            theta: BoundSpec::Uniform { value: 0.1 },
            n: 2,
            m: 2,
        };
        let cost = CostSpec::Dense {
            matrix: DenseMatrix::new(2, 2, vec![0.0, 1.0, 2.0, 0.0]).unwrap(),
        };
        assert!((record.fixed_cost(&cost) - 0.3).abs() < 1e-15);
    }
}
