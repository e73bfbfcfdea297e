use serde::{Deserialize, Serialize};

use crate::matrix::DenseMatrix;
use crate::problem::{CostSpec, Marginals, ProblemInstance};
use crate::{CoreError, Result};

/// A dense transport plan. Stores finite entries only; bound and marginal
/// conformance are reported by [`max_bound_violation`] and
/// [`marginal_residuals`], never silently assumed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransportPlan {
    gamma: DenseMatrix,
}

impl TransportPlan {
    pub fn new(gamma: DenseMatrix) -> Result<Self> {
        if gamma.iter().any(|x| !x.is_finite()) {
            return Err(CoreError::NonFinite { context: "transport plan" });
        }
        Ok(Self { gamma })
    }

    pub fn n(&self) -> usize {
        self.gamma.rows()
    }

    pub fn m(&self) -> usize {
        self.gamma.cols()
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.gamma.get(i, j)
    }

    pub fn matrix(&self) -> &DenseMatrix {
        &self.gamma
    }

    /// Row sums `gamma 1`.
    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.n()).map(|i| self.gamma.row(i).iter().sum()).collect()
    }

    /// Column sums `gamma^T 1`.
    pub fn col_sums(&self) -> Vec<f64> {
        let mut sums = vec![0.0; self.m()];
        for i in 0..self.n() {
            for (j, s) in sums.iter_mut().enumerate() {
                *s += self.gamma.get(i, j);
            }
        }
        sums
    }

    pub fn total_mass(&self) -> f64 {
        self.gamma.iter().sum()
    }
}

/// Transport cost `<cost, gamma>`, streamed over the cost spec so grid costs
/// never densify.
pub fn objective(cost: &CostSpec, plan: &TransportPlan) -> f64 {
    let mut total = 0.0;
    for i in 0..plan.n() {
        for j in 0..plan.m() {
            let g = plan.get(i, j);
            if g != 0.0 {
                total += cost.value(i, j) * g;
            }
        }
    }
    total
}

/// Doubly regularized objective
///
/// ```text
/// <cost, gamma> + eps <gamma - lower, ln(gamma - lower)>
///               + eps <upper - gamma, ln(upper - gamma)>
/// ```
///
/// with the convention `0 ln 0 = 0`. At `eps = 0` this equals
/// [`objective`]. Entries outside `[lower, upper]` are a domain error.
pub fn regularized_objective(
    instance: &ProblemInstance,
    plan: &TransportPlan,
    epsilon: f64,
) -> Result<f64> {
    fn ent(x: f64) -> f64 {
        if x > 0.0 {
            x * x.ln()
        } else {
            0.0
        }
    }

    let mut total = 0.0;
    for i in 0..plan.n() {
        for j in 0..plan.m() {
            let g = plan.get(i, j);
            let lo = instance.lower(i, j);
            let hi = instance.upper(i, j);
            if g < lo || g > hi {
                return Err(CoreError::PlanOutOfBounds { i, j, value: g, lower: lo, upper: hi });
            }
            total += instance.cost().value(i, j) * g;
            if epsilon != 0.0 {
                total += epsilon * (ent(g - lo) + ent(hi - g));
            }
        }
    }
    Ok(total)
}

/// Worst marginal mismatches `(||gamma 1 - u||_inf, ||gamma^T 1 - v||_inf)`.
pub fn marginal_residuals(plan: &TransportPlan, marginals: &Marginals) -> (f64, f64) {
    let row = plan
        .row_sums()
        .iter()
        .zip(marginals.u())
        .fold(0.0f64, |a, (&s, &ui)| a.max((s - ui).abs()));
    let col = plan
        .col_sums()
        .iter()
        .zip(marginals.v())
        .fold(0.0f64, |a, (&s, &vj)| a.max((s - vj).abs()));
    (row, col)
}

/// Largest bound overshoot `max_ij max(lower - gamma, gamma - upper, 0)`.
/// Zero means the plan sits inside its box.
pub fn max_bound_violation(plan: &TransportPlan, instance: &ProblemInstance) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..plan.n() {
        for j in 0..plan.m() {
            let g = plan.get(i, j);
            worst = worst.max(instance.lower(i, j) - g).max(g - instance.upper(i, j));
        }
    }
    worst.max(0.0)
}
