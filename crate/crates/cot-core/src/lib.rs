//! Core types and plan utilities for capacity-constrained discrete optimal
//! transport.
//!
//! A problem instance couples two probability vectors `u` (length `n`) and
//! `v` (length `m`) through a plan `gamma` with prescribed entrywise bounds
//! `lower <= gamma <= upper` and marginal constraints `gamma 1 = u`,
//! `gamma^T 1 = v`. This crate owns the instance representation, feasibility
//! checks, the reduction that removes nonzero lower bounds, objective and
//! residual helpers, and the JSON interchange format. Solvers live in
//! sibling crates.

mod matrix;
mod plan;
mod problem;
mod reduce;
mod report;
mod validate;

pub use matrix::DenseMatrix;
pub use plan::{
    max_bound_violation, marginal_residuals, objective, regularized_objective, TransportPlan,
};
pub use problem::{BoundSpec, CapacityBounds, CostSpec, Marginals, ProblemInstance};
pub use reduce::{lift_plan, reduce_to_upper_bounded, ReductionRecord};
pub use report::{SolveReport, StopReason, TraceRecord};
pub use validate::{validate_feasibility, Violation};

/// Shared numeric tolerances. Centralized so tests and solvers agree on what
/// "exact" means at each interface.
pub mod tolerances {
    /// Feasibility comparisons: mass balance and marginal-versus-capacity
    /// sums are violations only beyond this slack.
    pub const FEASIBILITY: f64 = 1e-12;

    /// Reduce -> solve -> lift round trips must reproduce plans and
    /// objectives to this bound on well-scaled instances.
    pub const ROUND_TRIP: f64 = 1e-12;

    /// The exact oracle certifies optimality when its primal-dual gap is at
    /// most this value.
    pub const LP_CERTIFICATE: f64 = 1e-9;
}

/// Errors raised by core constructors and plan utilities.
#[derive(Debug, thiserror::Error)]
pub enum CoreError {
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch { context: &'static str, expected: usize, got: usize },

    #[error("non-finite value in {context}")]
    NonFinite { context: &'static str },

    #[error("marginal entry {index} is negative ({value})")]
    NegativeMass { index: usize, value: f64 },

    #[error("marginal mass must equal 1 within {tol}: got {total}")]
    MassNotNormalized { total: f64, tol: f64 },

    #[error("instance violates feasibility preconditions ({} violations)", .0.len())]
    Infeasible(Vec<Violation>),

    #[error("lower-bound mass leaves no free mass: k_theta = {k_theta}")]
    NonpositiveScale { k_theta: f64 },

    #[error("plan entry ({i},{j}) = {value} lies outside [{lower}, {upper}]")]
    PlanOutOfBounds { i: usize, j: usize, value: f64, lower: f64, upper: f64 },
}

pub type Result<T> = std::result::Result<T, CoreError>;
