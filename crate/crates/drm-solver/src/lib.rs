//! Entropic solver for capacity-constrained transport.
//!
//! The plan is parameterized by per-row and per-column dual scalings; each
//! outer iteration re-solves every scaling exactly with a safeguarded Newton
//! search on a one-dimensional margin function, alternating between the row
//! and column sides. Explicit scalings are periodically absorbed into
//! log-domain offsets so small regularization strengths stay inside
//! floating-point range.
//!
//! Instances with nonzero lower bounds are handled by folding the lower
//! bounds into the marginals and capacities up front and lifting the
//! solution back afterwards.

pub mod eval;
pub mod rootfind;
mod solver;

pub use eval::{f_derivative, f_eval, g_derivative, g_eval, kernel_entry};
pub use rootfind::{newton_root, NewtonCfg, RootError, RootOutcome};
pub use solver::{
    drm_solve, drm_solve_traced, half_sweep_cols, half_sweep_rows, recover_plan, DrmConfig,
    DrmSolution, DualPotentials, STRICT_MARGIN,
};

use cot_core::Violation;
use cot_core::CoreError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    Row,
    Col,
}

impl std::fmt::Display for Axis {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Axis::Row => "row",
            Axis::Col => "column",
        })
    }
}

#[derive(Debug, thiserror::Error)]
pub enum DrmError {
    #[error("instance fails feasibility preconditions ({} violations)", .0.len())]
    Infeasible(Vec<Violation>),

    #[error("{axis} {index} carries no mass; its dual scaling has no positive root")]
    DegenerateMass { axis: Axis, index: usize },

    #[error(
        "{axis} {index} mass {mass} leaves no interior slack under total capacity {capacity}"
    )]
    DegenerateCapacity { axis: Axis, index: usize, mass: f64, capacity: f64 },

    #[error(
        "kernel products for {axis} {index} left the representable range at this \
         regularization; enable stabilization or increase epsilon"
    )]
    KernelUnderflow { axis: Axis, index: usize },

    #[error("root search failed for {axis} {index}: {source}")]
    NewtonFailure { axis: Axis, index: usize, source: RootError },

    #[error("configuration rejected: {reason}")]
    Config { reason: String },

    #[error(transparent)]
    Core(#[from] CoreError),
}

pub type Result<T> = std::result::Result<T, DrmError>;
