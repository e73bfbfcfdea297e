use std::time::Instant;

use cot_core::{objective, ProblemInstance, SolveReport, TraceRecord, TransportPlan};
use drm_solver::{drm_solve_traced, DrmConfig, DrmError};
use ibp_baseline::{ibp_solve_traced, IbpConfig, IbpError};
use lp_oracle::{lp_solve_exact, LpConfig, LpError, LpStatus};

use crate::{CliError, SolverKind, SolverOpts};

/// LP-specific report fields; the iterative solvers carry a SolveReport
/// instead.
pub struct LpMeta {
    pub status: String,
    pub duality_gap: f64,
    pub pivots: usize,
}

pub struct RunOutcome {
    pub plan: TransportPlan,
    pub objective: f64,
    pub report: Option<SolveReport>,
    pub lp: Option<LpMeta>,
    pub wall_time_s: f64,
}

pub fn drm_config(opts: &SolverOpts) -> DrmConfig {
    DrmConfig {
        epsilon: opts.epsilon,
        outer_tol: opts.outer_tol,
        newton_tol: opts.newton_tol,
        max_outer_iters: opts.maxiter,
        stabilize: opts.stabilize,
        ..DrmConfig::default()
    }
}

pub fn ibp_config(opts: &SolverOpts) -> IbpConfig {
    IbpConfig {
        epsilon: opts.epsilon,
        outer_tol: opts.outer_tol,
        max_outer_iters: opts.maxiter,
        ..IbpConfig::default()
    }
}

fn map_drm(err: DrmError) -> CliError {
    match err {
        DrmError::Infeasible(_)
        | DrmError::DegenerateMass { .. }
        | DrmError::DegenerateCapacity { .. } => CliError::Infeasible(err.to_string()),
        DrmError::KernelUnderflow { .. } | DrmError::NewtonFailure { .. } => {
            CliError::Numeric(err.to_string())
        }
        DrmError::Config { .. } | DrmError::Core(_) => CliError::Other(err.to_string()),
    }
}

fn map_ibp(err: IbpError) -> CliError {
    match err {
        IbpError::Infeasible(_) => CliError::Infeasible(err.to_string()),
        IbpError::RowSumZero { .. } | IbpError::ColSumZero { .. } => {
            CliError::Numeric(err.to_string())
        }
        IbpError::MemoryCap { .. } => CliError::SizeCap(err.to_string()),
        IbpError::Config { .. } | IbpError::Core(_) => CliError::Other(err.to_string()),
    }
}

fn map_lp(err: LpError) -> CliError {
    match err {
        LpError::SizeCap { cells, cap } => CliError::SizeCap(format!(
            "instance has {cells} cells, above the LP oracle cap of {cap}; raise --lp-cap to allow it"
        )),
        LpError::InvalidInstance(_) => CliError::Infeasible(err.to_string()),
        _ => CliError::Numeric(err.to_string()),
    }
}

/// Runs one solver on one instance. The trace callback only fires for the
/// iterative solvers.
pub fn run_solver(
    instance: &ProblemInstance,
    kind: SolverKind,
    opts: &SolverOpts,
    trace: Option<&mut dyn FnMut(TraceRecord)>,
) -> Result<RunOutcome, CliError> {
    match kind {
        SolverKind::Drm => {
            let sol = drm_solve_traced(instance, &drm_config(opts), trace).map_err(map_drm)?;
            Ok(RunOutcome {
                objective: objective(instance.cost(), &sol.plan),
                wall_time_s: sol.report.wall_time_s,
                report: Some(sol.report),
                lp: None,
                plan: sol.plan,
            })
        }
        SolverKind::Ibp => {
            let sol = ibp_solve_traced(instance, &ibp_config(opts), trace).map_err(map_ibp)?;
            Ok(RunOutcome {
                objective: objective(instance.cost(), &sol.plan),
                wall_time_s: sol.report.wall_time_s,
                report: Some(sol.report),
                lp: None,
                plan: sol.plan,
            })
        }
        SolverKind::Lp => {
            let config = LpConfig { max_cells: opts.lp_cap, ..LpConfig::default() };
            let start = Instant::now();
            let sol = lp_solve_exact(instance, &config).map_err(map_lp)?;
            let wall_time_s = start.elapsed().as_secs_f64();
            if let LpStatus::Infeasible { unmet_rows, unmet_cols } = &sol.status {
                return Err(CliError::Infeasible(format!(
                    "no feasible plan: {} rows and {} columns cannot route their mass within the capacities",
                    unmet_rows.len(),
                    unmet_cols.len()
                )));
            }
            let status = match sol.status {
                LpStatus::Optimal => "optimal",
                LpStatus::IterationLimit => "iteration_limit",
                LpStatus::Infeasible { .. } => unreachable!(),
            };
            Ok(RunOutcome {
                objective: sol.objective,
                wall_time_s,
                report: None,
                lp: Some(LpMeta {
                    status: status.to_string(),
                    duality_gap: sol.duality_gap,
                    pivots: sol.pivots,
                }),
                plan: sol.plan,
            })
        }
    }
}

/// Ground truth for error columns: the LP optimum, when the instance is
/// within the cap and solvable.
pub fn oracle_objective(
    instance: &ProblemInstance,
    lp_cap: usize,
) -> Result<Option<f64>, CliError> {
    if instance.n() * instance.m() > lp_cap {
        return Ok(None);
    }
    let config = LpConfig { max_cells: lp_cap, ..LpConfig::default() };
    let sol = lp_solve_exact(instance, &config).map_err(map_lp)?;
    match sol.status {
        LpStatus::Optimal => Ok(Some(sol.objective)),
        LpStatus::Infeasible { unmet_rows, unmet_cols } => Err(CliError::Infeasible(format!(
            "no feasible plan: {} rows and {} columns cannot route their mass within the capacities",
            unmet_rows.len(),
            unmet_cols.len()
        ))),
        LpStatus::IterationLimit => {
            Err(CliError::Numeric("LP oracle hit its pivot limit".to_string()))
        }
    }
}
