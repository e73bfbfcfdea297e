use std::fs;
use std::io::Write as _;

use lp_oracle::relative_error_from_objectives;
use serde_json::Value;

use crate::{CliError, TraceArgs};

fn field(record: &Value, name: &str, line: usize) -> Result<f64, CliError> {
    record
        .get(name)
        .and_then(Value::as_f64)
        .ok_or_else(|| CliError::Other(format!("trace line {line} has no numeric `{name}` field")))
}

/// Turns a `solve --trace` file into `iter,time_s,rel_err` CSV, measuring
/// each iterate's objective against the oracle value recorded in the meta
/// line.
pub fn cmd_trace(args: TraceArgs) -> Result<(), CliError> {
    let text = fs::read_to_string(&args.input)
        .map_err(|e| CliError::Other(format!("cannot read {}: {e}", args.input.display())))?;
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());

    let (_, meta_line) = lines
        .next()
        .ok_or_else(|| CliError::Other("trace file is empty; expected a meta line".into()))?;
    let meta: Value = serde_json::from_str(meta_line)
        .map_err(|e| CliError::Other(format!("cannot parse trace meta line: {e}")))?;
    if meta.get("type").and_then(Value::as_str) != Some("meta") {
        return Err(CliError::Other(
            "first trace line is not a meta record; was this file produced by `cot solve --trace`?"
                .into(),
        ));
    }
    let oracle = meta
        .get("oracle_objective")
        .and_then(Value::as_f64)
        .ok_or_else(|| {
            CliError::Other(
                "trace has no oracle objective, so rel_err is undefined; re-run `cot solve \
                 --trace` on an instance within --lp-cap"
                    .into(),
            )
        })?;

    let mut writer = csv::Writer::from_writer(Vec::new());
    writer
        .write_record(["iter", "time_s", "rel_err"])
        .map_err(|e| CliError::Other(e.to_string()))?;
    for (idx, line) in lines {
        let record: Value = serde_json::from_str(line)
            .map_err(|e| CliError::Other(format!("cannot parse trace line {}: {e}", idx + 1)))?;
        if record.get("type").and_then(Value::as_str) != Some("iter") {
            continue;
        }
        let iter = field(&record, "iter", idx + 1)?;
        let elapsed = field(&record, "elapsed_s", idx + 1)?;
        let objective = field(&record, "objective", idx + 1)?;
        let rel = relative_error_from_objectives(objective, oracle).value;
        writer
            .write_record([
                format!("{}", iter as u64),
                format!("{elapsed:.6}"),
                format!("{rel:.6e}"),
            ])
            .map_err(|e| CliError::Other(e.to_string()))?;
    }
    let bytes = writer.into_inner().map_err(|e| CliError::Other(e.to_string()))?;
    let rendered = String::from_utf8(bytes).expect("csv output is utf-8");

    match &args.out {
        Some(path) => fs::write(path, rendered)?,
        None => std::io::stdout().write_all(rendered.as_bytes())?,
    }
    Ok(())
}
