use serde::{Deserialize, Serialize};

/// Why an iterative solver stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    /// Outer residual dropped below the configured tolerance.
    Tolerance,
    /// Iteration budget exhausted before the tolerance was met.
    MaxIters,
}

/// Outcome of one solver run. Shared by the iterative solvers so benchmark
/// plumbing can treat them uniformly.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolveReport {
    pub outer_iters: usize,
    pub converged: bool,
    pub stop_reason: StopReason,
    /// Outer residual after each iteration, in order.
    pub outer_residual_history: Vec<f64>,
    /// Inner root-finding iterations summed over the whole run (zero for
    /// solvers without an inner loop).
    pub total_newton_iters: usize,
    pub wall_time_s: f64,
    /// `||gamma 1 - u||_inf` of the returned plan.
    pub final_row_residual: f64,
    /// `||gamma^T 1 - v||_inf` of the returned plan.
    pub final_col_residual: f64,
    /// Live scalars in the solver's persistent iteration state: the buffers
    /// the algorithm reads and writes to produce the next iterate. Output
    /// diagnostics (this report, traces, the returned plan) are excluded.
    pub state_scalars: usize,
}

/// One per-iteration trace sample, emitted through the optional trace
/// callback of the iterative solvers.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TraceRecord {
    pub iter: usize,
    /// Outer residual at this iteration (dual change for the Newton solver,
    /// plan change for the projection solver).
    pub delta_outer: f64,
    pub row_residual: f64,
    pub col_residual: f64,
    pub elapsed_s: f64,
    /// Transport cost of the current iterate's plan.
    pub objective: f64,
}
