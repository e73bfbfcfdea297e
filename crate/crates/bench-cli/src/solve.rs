use std::fs;

use cot_core::{marginal_residuals, ProblemInstance, TraceRecord};
use instance_gen::{gen_instance, GenError, GenSpec};
use lp_oracle::relative_error_from_objectives;
use serde_json::{json, Map, Value};

use crate::run::{oracle_objective, run_solver};
use crate::{CliError, SolveArgs, SolverKind};

pub fn map_gen(err: GenError) -> CliError {
    match err {
        GenError::RetriesExhausted { .. } => CliError::Infeasible(err.to_string()),
        _ => CliError::Other(err.to_string()),
    }
}

/// Instance from `--instance FILE`, or from the generator flags. The second
/// value records the provenance for the report.
fn load_or_generate(args: &SolveArgs) -> Result<(ProblemInstance, Value), CliError> {
    if let Some(path) = &args.instance {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Other(format!("cannot read {}: {e}", path.display())))?;
        let instance: ProblemInstance = serde_json::from_str(&text)
            .map_err(|e| CliError::Other(format!("cannot parse {}: {e}", path.display())))?;
        return Ok((instance, json!({ "path": path.display().to_string() })));
    }
    let family = args
        .family
        .ok_or_else(|| CliError::Other("pass --instance FILE, or --family with --size".into()))?;
    let size = args
        .size
        .ok_or_else(|| CliError::Other("generating an instance needs --size".into()))?;
    let spec = GenSpec {
        family: family.to_family(),
        size,
        lambda: args.lambda.unwrap_or(5.0),
        delta: args.delta.unwrap_or(1.0),
        seed: args.seed,
    };
    let generated = gen_instance(&spec).map_err(map_gen)?;
    let mut source = Map::new();
    source.insert("family".into(), json!(family.name()));
    source.insert("size".into(), json!(size));
    let param = spec.family.parameter_name();
    let value = if param == "lambda" { spec.lambda } else { spec.delta };
    source.insert(param.into(), json!(value));
    source.insert("seed".into(), json!(args.seed));
    if generated.retries > 0 {
        source.insert("seed_retries".into(), json!(generated.retries));
    }
    Ok((generated.instance, Value::Object(source)))
}

pub fn cmd_solve(args: SolveArgs) -> Result<(), CliError> {
    let (instance, source) = load_or_generate(&args)?;

    if args.trace.is_some() && args.solver == SolverKind::Lp {
        return Err(CliError::Other(
            "the lp solver has no iteration trace; use --solver drm or ibp".into(),
        ));
    }

    let mut records: Vec<TraceRecord> = Vec::new();
    let outcome = {
        let mut push = |r: TraceRecord| records.push(r);
        let cb: Option<&mut dyn FnMut(TraceRecord)> =
            if args.trace.is_some() { Some(&mut push) } else { None };
        run_solver(&instance, args.solver, &args.opts, cb)?
    };

    // Ground truth for the error fields, when the instance fits under the
    // oracle cap. Oracle infeasibility is decisive even if the iterative
    // solver returned; anything else downgrades to a warning.
    let oracle = if args.solver == SolverKind::Lp {
        None
    } else {
        match oracle_objective(&instance, args.opts.lp_cap) {
            Ok(v) => v,
            Err(CliError::Infeasible(m)) => return Err(CliError::Infeasible(m)),
            Err(e) => {
                eprintln!("warning: LP oracle unavailable: {}", e.message());
                None
            }
        }
    };

    let mut doc = Map::new();
    doc.insert("solver".into(), json!(args.solver.name()));
    doc.insert("instance".into(), source);
    doc.insert("n".into(), json!(instance.n()));
    doc.insert("m".into(), json!(instance.m()));
    doc.insert("objective".into(), json!(outcome.objective));
    doc.insert("wall_time_s".into(), json!(outcome.wall_time_s));
    if args.solver != SolverKind::Lp {
        doc.insert("epsilon".into(), json!(args.opts.epsilon));
    }
    if let Some(report) = &outcome.report {
        doc.insert("report".into(), serde_json::to_value(report)?);
    }
    if let Some(lp) = &outcome.lp {
        let (row_res, col_res) = marginal_residuals(&outcome.plan, instance.marginals());
        doc.insert(
            "lp".into(),
            json!({
                "status": lp.status,
                "duality_gap": lp.duality_gap,
                "pivots": lp.pivots,
                "row_residual": row_res,
                "col_residual": col_res,
            }),
        );
    }
    if let Some(oracle_obj) = oracle {
        let err = relative_error_from_objectives(outcome.objective, oracle_obj);
        doc.insert("oracle_objective".into(), json!(oracle_obj));
        doc.insert("rel_error".into(), json!(err.value));
        doc.insert("rel_error_absolute".into(), json!(err.absolute));
    }
    if args.emit_plan {
        let matrix = outcome.plan.matrix();
        let rows: Vec<&[f64]> = (0..outcome.plan.n()).map(|i| matrix.row(i)).collect();
        doc.insert("plan".into(), json!(rows));
    }

    if let Some(path) = &args.trace {
        let mut text = String::new();
        let meta = json!({
            "type": "meta",
            "solver": args.solver.name(),
            "n": instance.n(),
            "m": instance.m(),
            "epsilon": args.opts.epsilon,
            "oracle_objective": oracle,
        });
        text.push_str(&serde_json::to_string(&meta)?);
        text.push('\n');
        for record in &records {
            let mut value = serde_json::to_value(record)?;
            let obj = value.as_object_mut().expect("trace records serialize to objects");
            obj.insert("type".into(), json!("iter"));
            text.push_str(&serde_json::to_string(&value)?);
            text.push('\n');
        }
        fs::write(path, text)?;
    }

    let mut rendered = serde_json::to_string_pretty(&Value::Object(doc))?;
    rendered.push('\n');
    match &args.out {
        Some(path) => fs::write(path, rendered)?,
        None => print!("{rendered}"),
    }
    Ok(())
}
