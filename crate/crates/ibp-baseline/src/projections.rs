use crate::{IbpError, Result};
use cot_core::{BoundSpec, CoreError, DenseMatrix};

/// Dykstra iterate: the dense plan plus the stored correction multipliers
/// for the one non-affine constraint set (the capacity box). The marginal
/// sets are affine in the plan, so their projections compose without
/// corrections.
#[derive(Debug, Clone)]
pub struct DykstraState {
    plan: DenseMatrix,
    corrections: DenseMatrix,
    cycle_position: usize,
}

impl DykstraState {
    /// Wraps a starting plan; corrections begin at one. Entries must be
    /// finite and nonnegative.
    pub fn new(plan: DenseMatrix) -> Result<Self> {
        for &value in plan.data() {
            if !value.is_finite() {
                return Err(IbpError::Core(CoreError::NonFinite { context: "plan entry" }));
            }
            if value < 0.0 {
                return Err(IbpError::Config { reason: format!("negative plan entry {value}") });
            }
        }
        let corrections = DenseMatrix::new(
            plan.rows(),
            plan.cols(),
            vec![1.0; plan.rows() * plan.cols()],
        )?;
        Ok(Self { plan, corrections, cycle_position: 0 })
    }

    pub fn plan(&self) -> &DenseMatrix {
        &self.plan
    }

    pub fn corrections(&self) -> &DenseMatrix {
        &self.corrections
    }

    /// Position within the rows -> cols -> box cycle: 0 before rows, 1
    /// before cols, 2 before the box projection.
    pub fn cycle_position(&self) -> usize {
        self.cycle_position
    }

    pub fn into_plan(self) -> DenseMatrix {
        self.plan
    }
}

/// KL projection onto the row-marginal set: scales each row to sum to its
/// target mass. A row with zero mass is left alone when its target is also
/// zero and is an error otherwise.
pub fn kl_project_rows(state: &mut DykstraState, u: &[f64]) -> Result<()> {
    let n = state.plan.rows();
    let m = state.plan.cols();
    for i in 0..n {
        let row = &mut state.plan.data_mut()[i * m..(i + 1) * m];
        let total: f64 = row.iter().sum();
        if total <= 0.0 {
            if u[i] == 0.0 {
                continue;
            }
            return Err(IbpError::RowSumZero { row: i });
        }
        let scale = u[i] / total;
        row.iter_mut().for_each(|x| *x *= scale);
    }
    state.cycle_position = 1;
    Ok(())
}

/// Column counterpart of [`kl_project_rows`].
pub fn kl_project_cols(state: &mut DykstraState, v: &[f64]) -> Result<()> {
    let n = state.plan.rows();
    let m = state.plan.cols();
    let mut totals = vec![0.0; m];
    for i in 0..n {
        for (j, t) in totals.iter_mut().enumerate() {
            *t += state.plan.get(i, j);
        }
    }
    let mut scales = vec![0.0; m];
    for j in 0..m {
        if totals[j] <= 0.0 {
            if v[j] == 0.0 {
                scales[j] = 1.0;
                continue;
            }
            return Err(IbpError::ColSumZero { col: j });
        }
        scales[j] = v[j] / totals[j];
    }
    for i in 0..n {
        for (j, &s) in scales.iter().enumerate() {
            state.plan.set(i, j, state.plan.get(i, j) * s);
        }
    }
    state.cycle_position = 2;
    Ok(())
}

/// Dykstra step for the capacity box: reapply the stored correction, clamp
/// to the upper bound, and stash the multiplier the clamp removed. Cells the
/// clamp leaves at zero keep a neutral correction.
pub fn kl_project_box(state: &mut DykstraState, eta: &BoundSpec) {
    let n = state.plan.rows();
    let m = state.plan.cols();
    for i in 0..n {
        for j in 0..m {
            let restored = state.plan.get(i, j) * state.corrections.get(i, j);
            let clamped = restored.min(eta.value(i, j));
            state.plan.set(i, j, clamped);
            let corr = if clamped > 0.0 { restored / clamped } else { 1.0 };
            state.corrections.set(i, j, corr);
        }
    }
    state.cycle_position = 0;
}

#[cfg(test)]
mod tests {
    use super::*;

    fn state_from(rows: usize, cols: usize, data: Vec<f64>) -> DykstraState {
        DykstraState::new(DenseMatrix::new(rows, cols, data).unwrap()).unwrap()
    }

    #[test]
    fn row_projection_is_exact_and_idempotent() {
        let mut state = state_from(2, 2, vec![0.3, 0.1, 0.2, 0.9]);
        let u = [0.5, 0.5];
        kl_project_rows(&mut state, &u).unwrap();
        for i in 0..2 {
            let sum: f64 = state.plan().row(i).iter().sum();
            assert!((sum - u[i]).abs() <= 1e-14);
        }
        let before = state.plan().clone();
        kl_project_rows(&mut state, &u).unwrap();
        for (a, b) in before.data().iter().zip(state.plan().data()) {
            assert!((a - b).abs() <= 1e-15);
        }
    }

    #[test]
    fn doubled_rows_are_halved() {
        // plan = const * eta with row sums exactly 2u: projection halves it
        let mut state = state_from(2, 2, vec![0.5, 0.5, 0.5, 0.5]);
        let u = [0.5, 0.5];
        kl_project_rows(&mut state, &u).unwrap();
        for &x in state.plan().data() {
            assert!((x - 0.25).abs() <= 1e-15);
        }
    }

    #[test]
    fn column_projection_mirrors_rows() {
        let mut state = state_from(2, 2, vec![0.3, 0.1, 0.2, 0.9]);
        let v = [0.4, 0.6];
        kl_project_cols(&mut state, &v).unwrap();
        for j in 0..2 {
            let sum = state.plan().get(0, j) + state.plan().get(1, j);
            assert!((sum - v[j]).abs() <= 1e-14);
        }
    }

    #[test]
    fn zero_mass_lines_error_only_with_a_positive_target() {
        let mut state = state_from(2, 2, vec![0.0, 0.0, 0.2, 0.3]);
        match kl_project_rows(&mut state, &[0.5, 0.5]) {
            Err(IbpError::RowSumZero { row }) => assert_eq!(row, 0),
            other => panic!("expected RowSumZero, got {other:?}"),
        }
        let mut state = state_from(2, 2, vec![0.0, 0.0, 0.2, 0.3]);
        kl_project_rows(&mut state, &[0.0, 1.0]).unwrap();
        assert_eq!(state.plan().get(0, 0), 0.0);

        let mut state = state_from(2, 2, vec![0.0, 0.1, 0.0, 0.3]);
        match kl_project_cols(&mut state, &[0.5, 0.5]) {
            Err(IbpError::ColSumZero { col }) => assert_eq!(col, 0),
            other => panic!("expected ColSumZero, got {other:?}"),
        }
    }

    #[test]
    fn box_clamp_stores_the_removed_multiplier() {
        let mut state = state_from(1, 1, vec![3.0]);
        kl_project_box(&mut state, &BoundSpec::Uniform { value: 2.0 });
        assert_eq!(state.plan().get(0, 0), 2.0);
        assert!((state.corrections().get(0, 0) - 1.5).abs() <= 1e-15);
        // reapplying restores 3.0 and clamps to the same fixed point
        kl_project_box(&mut state, &BoundSpec::Uniform { value: 2.0 });
        assert_eq!(state.plan().get(0, 0), 2.0);
        assert!((state.corrections().get(0, 0) - 1.5).abs() <= 1e-15);
    }

    #[test]
    fn inactive_box_is_a_no_op() {
        let mut state = state_from(2, 2, vec![0.3, 0.1, 0.2, 0.4]);
        let before = state.plan().clone();
        kl_project_box(&mut state, &BoundSpec::Uniform { value: 1.0 });
        for (a, b) in before.data().iter().zip(state.plan().data()) {
            assert_eq!(a, b);
        }
        for &c in state.corrections().data() {
            assert_eq!(c, 1.0);
        }
    }

    #[test]
    fn zero_capacity_cells_stay_at_zero() {
        let mut state = state_from(1, 2, vec![0.0, 0.4]);
        let eta = DenseMatrix::new(1, 2, vec![0.0, 1.0]).unwrap();
        kl_project_box(&mut state, &BoundSpec::Dense { matrix: eta });
        assert_eq!(state.plan().get(0, 0), 0.0);
        assert_eq!(state.corrections().get(0, 0), 1.0);
        assert_eq!(state.plan().get(0, 1), 0.4);
    }

    #[test]
    fn cycle_position_tracks_the_order() {
        let mut state = state_from(1, 1, vec![0.5]);
        assert_eq!(state.cycle_position(), 0);
        kl_project_rows(&mut state, &[0.5]).unwrap();
        assert_eq!(state.cycle_position(), 1);
        kl_project_cols(&mut state, &[0.5]).unwrap();
        assert_eq!(state.cycle_position(), 2);
        kl_project_box(&mut state, &BoundSpec::Uniform { value: 1.0 });
        assert_eq!(state.cycle_position(), 0);
    }
}
