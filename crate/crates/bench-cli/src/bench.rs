use std::fs;
use std::io::Write as _;
use std::thread;
use std::time::Instant;

use cot_core::ProblemInstance;
use instance_gen::{gen_instance, GenSpec};
use lp_oracle::relative_error_from_objectives;
use serde_json::{json, Map, Value};

use crate::run::{run_solver, RunOutcome};
use crate::solve::map_gen;
use crate::{BenchArgs, CliError, OutputFormat, SolverKind, SolverOpts};

pub const CSV_HEADER: [&str; 10] = [
    "family",
    "param",
    "size",
    "solver",
    "epsilon",
    "time_s",
    "rel_err",
    "speedup",
    "converged_frac",
    "trials",
];

/// One table value carrying both its CSV text and its JSON form, so the two
/// output formats cannot disagree.
#[derive(Clone)]
struct Cell {
    text: String,
    value: Value,
}

impl Cell {
    fn num(x: f64, text: String) -> Self {
        Cell { text, value: json!(x) }
    }

    fn text(s: &str) -> Self {
        Cell { text: s.to_string(), value: json!(s) }
    }
}

struct Row {
    family: &'static str,
    param: f64,
    size: usize,
    solver: &'static str,
    epsilon: f64,
    time_s: Cell,
    rel_err: Cell,
    speedup: Cell,
    converged_frac: Cell,
    trials: usize,
}

/// Measurements from one solver run on one instance.
struct TrialOut {
    time_metric: f64,
    objective: f64,
    converged: bool,
}

/// Cached exact solve for one instance; ground truth for rel_err and the
/// data behind lp table rows.
struct LpTrial {
    objective: f64,
    pivots: usize,
    wall_time_s: f64,
    optimal: bool,
}

/// Aggregates before formatting; `mean_time` is still numeric here so the
/// speedup column can be derived from it.
struct CellRaw {
    solver: SolverKind,
    mean_time: Option<f64>,
    rel_err: Option<f64>,
    rel_na: bool,
    converged_frac: Option<f64>,
    trials_used: usize,
}

fn solver_opts(args: &BenchArgs, epsilon: f64) -> SolverOpts {
    SolverOpts {
        epsilon,
        outer_tol: args.outer_tol,
        newton_tol: args.newton_tol,
        maxiter: args.maxiter,
        stabilize: args.stabilize,
        lp_cap: args.lp_cap,
    }
}

fn time_metric(outcome: &RunOutcome, deterministic: bool) -> f64 {
    if !deterministic {
        return outcome.wall_time_s;
    }
    match (&outcome.report, &outcome.lp) {
        (Some(report), _) => report.outer_iters as f64,
        (_, Some(lp)) => lp.pivots as f64,
        _ => 0.0,
    }
}

fn fmt_time(x: f64, deterministic: bool) -> String {
    if deterministic {
        format!("{x}")
    } else {
        format!("{x:.6}")
    }
}

pub fn cmd_bench(args: BenchArgs) -> Result<(), CliError> {
    let threads: usize = std::env::var("COT_BENCH_THREADS")
        .ok()
        .and_then(|s| s.parse().ok())
        .filter(|&t| t >= 1)
        .unwrap_or(1);
    if args.trials == 0 {
        return Err(CliError::Other("--trials must be at least 1".into()));
    }

    let family = args.family.to_family();
    let param = if family.parameter_name() == "lambda" { args.lambda } else { args.delta };
    let mut rows: Vec<Row> = Vec::new();

    for &size in &args.size {
        let mut instances: Vec<ProblemInstance> = Vec::with_capacity(args.trials);
        for t in 0..args.trials {
            let spec = GenSpec {
                family,
                size,
                lambda: args.lambda,
                delta: args.delta,
                seed: args.seed + t as u64,
            };
            instances.push(gen_instance(&spec).map_err(map_gen)?.instance);
        }
        let cells = instances[0].n() * instances[0].m();

        // One exact solve per instance, shared by every (epsilon, solver)
        // cell at this size. Skipped above the cap; rel_err is then N/A.
        let lp_runs: Option<Vec<LpTrial>> = if cells <= args.lp_cap {
            let opts = solver_opts(&args, args.epsilon[0]);
            let mut runs = Vec::with_capacity(args.trials);
            for instance in &instances {
                let outcome = run_solver(instance, SolverKind::Lp, &opts, None)?;
                let lp = outcome.lp.expect("lp runs carry lp metadata");
                runs.push(LpTrial {
                    objective: outcome.objective,
                    pivots: lp.pivots,
                    wall_time_s: outcome.wall_time_s,
                    optimal: lp.status == "optimal",
                });
            }
            Some(runs)
        } else {
            None
        };

        for &epsilon in &args.epsilon {
            let mut raws: Vec<CellRaw> = Vec::with_capacity(args.solver.len());
            for &solver in &args.solver {
                let raw = match solver {
                    SolverKind::Lp => lp_cell(&args, lp_runs.as_deref(), cells),
                    _ => iterative_cell(
                        &args,
                        solver,
                        epsilon,
                        &instances,
                        lp_runs.as_deref(),
                        threads,
                    ),
                };
                raws.push(raw);
            }

            let mean_time_of = |kind: SolverKind| {
                raws.iter().find(|r| r.solver == kind).and_then(|r| r.mean_time)
            };
            let ibp_time = mean_time_of(SolverKind::Ibp);
            let drm_time = mean_time_of(SolverKind::Drm);

            for raw in &raws {
                let speedup = match raw.solver {
                    SolverKind::Drm => match (ibp_time, drm_time) {
                        (Some(i), Some(d)) if d > 0.0 => {
                            let s = i / d;
                            Some(Cell::num(s, format!("{s:.3}")))
                        }
                        _ => None,
                    },
                    _ => None,
                };
                rows.push(Row {
                    family: args.family.name(),
                    param,
                    size,
                    solver: raw.solver.name(),
                    epsilon,
                    time_s: match raw.mean_time {
                        Some(t) => Cell::num(t, fmt_time(t, args.deterministic_times)),
                        None => Cell::text("-"),
                    },
                    rel_err: match (raw.rel_err, raw.rel_na) {
                        (Some(e), _) => Cell::num(e, format!("{e:.3e}")),
                        (None, true) => Cell::text("N/A"),
                        (None, false) => Cell::text("-"),
                    },
                    speedup: speedup.unwrap_or_else(|| Cell::text("-")),
                    converged_frac: match raw.converged_frac {
                        Some(f) => Cell::num(f, format!("{f:.3}")),
                        None => Cell::text("-"),
                    },
                    trials: raw.trials_used,
                });
            }
        }
    }

    emit(&args, &rows)
}

fn lp_cell(args: &BenchArgs, lp_runs: Option<&[LpTrial]>, cells: usize) -> CellRaw {
    match lp_runs {
        Some(runs) => {
            let time = runs
                .iter()
                .map(|r| if args.deterministic_times { r.pivots as f64 } else { r.wall_time_s })
                .sum::<f64>()
                / runs.len() as f64;
            let optimal = runs.iter().filter(|r| r.optimal).count() as f64 / runs.len() as f64;
            CellRaw {
                solver: SolverKind::Lp,
                mean_time: Some(time),
                rel_err: Some(0.0),
                rel_na: false,
                converged_frac: Some(optimal),
                trials_used: runs.len(),
            }
        }
        None => {
            eprintln!(
                "note: lp skipped at {cells} cells (cap {}); raise --lp-cap to include it",
                args.lp_cap
            );
            CellRaw {
                solver: SolverKind::Lp,
                mean_time: None,
                rel_err: None,
                rel_na: true,
                converged_frac: None,
                trials_used: 0,
            }
        }
    }
}

fn iterative_cell(
    args: &BenchArgs,
    solver: SolverKind,
    epsilon: f64,
    instances: &[ProblemInstance],
    lp_runs: Option<&[LpTrial]>,
    threads: usize,
) -> CellRaw {
    let opts = solver_opts(args, epsilon);
    let cell_start = Instant::now();
    let mut outs: Vec<TrialOut> = Vec::with_capacity(instances.len());
    let mut failure: Option<String> = None;
    let mut truncated = false;

    let trial_ids: Vec<usize> = (0..instances.len()).collect();
    for batch in trial_ids.chunks(threads) {
        if cell_start.elapsed().as_secs_f64() > args.time_budget {
            truncated = true;
            break;
        }
        let batch_outs: Vec<Result<TrialOut, CliError>> = thread::scope(|scope| {
            let handles: Vec<_> = batch
                .iter()
                .map(|&t| {
                    let instance = &instances[t];
                    let opts = &opts;
                    scope.spawn(move || {
                        let outcome = run_solver(instance, solver, opts, None)?;
                        let converged = outcome
                            .report
                            .as_ref()
                            .map(|r| r.converged)
                            .unwrap_or(false);
                        Ok(TrialOut {
                            time_metric: time_metric(&outcome, args.deterministic_times),
                            objective: outcome.objective,
                            converged,
                        })
                    })
                })
                .collect();
            handles.into_iter().map(|h| h.join().expect("trial thread panicked")).collect()
        });
        for out in batch_outs {
            match out {
                Ok(o) => outs.push(o),
                Err(e) => {
                    failure.get_or_insert_with(|| e.message().to_string());
                }
            }
        }
        if failure.is_some() {
            break;
        }
    }

    if let Some(msg) = failure {
        eprintln!(
            "note: {} failed at size {} epsilon {epsilon}: {msg}",
            solver.name(),
            instances[0].n()
        );
        return CellRaw {
            solver,
            mean_time: None,
            rel_err: None,
            rel_na: false,
            converged_frac: None,
            trials_used: 0,
        };
    }
    if truncated || outs.len() < instances.len() {
        eprintln!(
            "note: {} at epsilon {epsilon} exceeded the {}s cell budget after {} of {} trials",
            solver.name(),
            args.time_budget,
            outs.len(),
            instances.len()
        );
        return CellRaw {
            solver,
            mean_time: None,
            rel_err: None,
            rel_na: false,
            converged_frac: None,
            trials_used: outs.len(),
        };
    }

    let n = outs.len() as f64;
    let mean_time = outs.iter().map(|o| o.time_metric).sum::<f64>() / n;
    let converged_frac = outs.iter().filter(|o| o.converged).count() as f64 / n;
    let rel_err = lp_runs.map(|runs| {
        outs.iter()
            .zip(runs)
            .map(|(o, lp)| relative_error_from_objectives(o.objective, lp.objective).value)
            .sum::<f64>()
            / n
    });
    CellRaw {
        solver,
        mean_time: Some(mean_time),
        rel_na: rel_err.is_none(),
        rel_err,
        converged_frac: Some(converged_frac),
        trials_used: outs.len(),
    }
}

fn emit(args: &BenchArgs, rows: &[Row]) -> Result<(), CliError> {
    let rendered = match args.format {
        OutputFormat::Csv => {
            let mut writer = csv::Writer::from_writer(Vec::new());
            writer.write_record(CSV_HEADER).map_err(|e| CliError::Other(e.to_string()))?;
            for row in rows {
                writer
                    .write_record([
                        row.family.to_string(),
                        format!("{}", row.param),
                        row.size.to_string(),
                        row.solver.to_string(),
                        format!("{}", row.epsilon),
                        row.time_s.text.clone(),
                        row.rel_err.text.clone(),
                        row.speedup.text.clone(),
                        row.converged_frac.text.clone(),
                        row.trials.to_string(),
                    ])
                    .map_err(|e| CliError::Other(e.to_string()))?;
            }
            let bytes = writer.into_inner().map_err(|e| CliError::Other(e.to_string()))?;
            String::from_utf8(bytes).expect("csv output is utf-8")
        }
        OutputFormat::Json => {
            let values: Vec<Value> = rows
                .iter()
                .map(|row| {
                    let mut doc = Map::new();
                    doc.insert("family".into(), json!(row.family));
                    doc.insert("param".into(), json!(row.param));
                    doc.insert("size".into(), json!(row.size));
                    doc.insert("solver".into(), json!(row.solver));
                    doc.insert("epsilon".into(), json!(row.epsilon));
                    doc.insert("time_s".into(), row.time_s.value.clone());
                    doc.insert("rel_err".into(), row.rel_err.value.clone());
                    doc.insert("speedup".into(), row.speedup.value.clone());
                    doc.insert("converged_frac".into(), row.converged_frac.value.clone());
                    doc.insert("trials".into(), json!(row.trials));
                    Value::Object(doc)
                })
                .collect();
            let mut text = serde_json::to_string_pretty(&values)?;
            text.push('\n');
            text
        }
    };

    match &args.out {
        Some(path) => fs::write(path, rendered)?,
        None => {
            let mut stdout = std::io::stdout();
            stdout.write_all(rendered.as_bytes())?;
        }
    }
    Ok(())
}
