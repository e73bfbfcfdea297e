//! Iterative Bregman projection baseline for capacity-constrained transport.
//!
//! Dykstra's scheme cycles KL projections over three constraint sets: the
//! row-marginal set, the column-marginal set, and the capacity box. The two
//! marginal sets are affine, so only the box carries a stored correction
//! between cycles. The iterate is the dense plan itself, which is what makes
//! this the memory-heavy baseline: where the Newton solver keeps a handful
//! of vectors, this keeps three N x M matrices alive.

mod projections;
mod solver;

pub use projections::{kl_project_box, kl_project_cols, kl_project_rows, DykstraState};
pub use solver::{ibp_solve, ibp_solve_traced, IbpConfig, IbpSolution};

use cot_core::{CoreError, Violation};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IbpError {
    #[error("instance failed feasibility validation ({} violations)", .0.len())]
    Infeasible(Vec<Violation>),
    #[error("row {row} has zero plan mass but a positive target; cannot rescale")]
    RowSumZero { row: usize },
    #[error("column {col} has zero plan mass but a positive target; cannot rescale")]
    ColSumZero { col: usize },
    #[error("instance has {cells} cells, above the configured cap of {cap}")]
    MemoryCap { cells: usize, cap: usize },
    #[error("invalid configuration: {reason}")]
    Config { reason: String },
    #[error(transparent)]
    Core(#[from] CoreError),
}

pub type Result<T> = std::result::Result<T, IbpError>;
