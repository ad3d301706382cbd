//! Executes a run plan and writes its datasets.

use std::fs;
use std::io::Write;
use std::path::PathBuf;

use gaussloss::dataset::{format_number, Cell, Table};
use gaussloss::loss::effective_transmissivity;
use gaussloss::sweeps::sweep_single_mode;
use gaussloss::vibronic::run_benchmark;
use gaussloss::Error;
use serde_json::{json, Value};

use crate::config::{Format, Job, RunPlan};

/// Decimal places of the comparison column in distance tables.
pub const COMPARISON_DECIMALS: i32 = 4;

/// Table plus the metadata needed to reproduce it.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub table: Table,
    pub metadata: Value,
}

/// A failed computation and the operation that raised it.
#[derive(Debug)]
pub struct NumericalFailure {
    pub operation: &'static str,
    pub error: Error,
}

fn round_to(v: f64, decimals: i32) -> f64 {
    let s = 10f64.powi(decimals);
    (v * s).round() / s
}

pub fn execute(plan: &RunPlan) -> Result<RunOutput, NumericalFailure> {
    match &plan.job {
        Job::Benchmark { fixture, loss, schemes } => {
            let report = run_benchmark(fixture, loss, schemes, plan.options)
                .map_err(|error| NumericalFailure { operation: "run_benchmark", error })?;
            let mut table = Table::new(&plan.name, &["scheme", "delta", "delta_rounded", "uncertainty"]);
            for row in &report.rows {
                table.push(vec![
                    row.scheme.as_str().into(),
                    row.delta.into(),
                    round_to(row.delta, COMPARISON_DECIMALS).into(),
                    row.uncertainty.into(),
                ]);
            }
            let corrected: Vec<Value> = report
                .rows
                .iter()
                .map(|r| json!({ "scheme": r.scheme, "corrected": r.result.corrected, "diagnostics": r.result.diagnostics }))
                .collect();
            let metadata = json!({
                "name": plan.name,
                "seed": plan.seed,
                "fixture": fixture.name,
                "options": plan.options,
                "effective_transmissivity": effective_transmissivity(loss),
                "loss": loss,
                "results": corrected,
            });
            Ok(RunOutput { table, metadata })
        }
        Job::Sweep { study, params } => {
            let table = sweep_single_mode(*study, params, plan.options)
                .map_err(|error| NumericalFailure { operation: "sweep_single_mode", error })?;
            let metadata =
                json!({ "name": plan.name, "seed": plan.seed, "study": study, "sweep": params, "options": plan.options });
            Ok(RunOutput { table, metadata })
        }
    }
}

fn rounded(c: &Cell) -> Value {
    match c {
        Cell::Num(v) if v.is_finite() => format_number(*v).parse::<f64>().map_or(Value::Null, |x| json!(x)),
        Cell::Num(_) => Value::Null,
        Cell::Text(s) => json!(s),
    }
}

/// Renders the table in the requested format with twelve significant digits.
pub fn render(out: &RunOutput, format: Format) -> String {
    match format {
        Format::Csv => out.table.to_csv(),
        Format::Json => {
            let rows: Vec<Value> = out
                .table
                .rows
                .iter()
                .map(|r| Value::Object(out.table.columns.iter().cloned().zip(r.iter().map(rounded)).collect()))
                .collect();
            let mut s = serde_json::to_string_pretty(&json!({ "study": out.table.study, "rows": rows })).expect("json");
            s.push('\n');
            s
        }
    }
}

/// Writes the dataset and its metadata; returns the dataset path.
pub fn write_outputs(out: &RunOutput, plan: &RunPlan) -> std::io::Result<Option<PathBuf>> {
    let Some(dir) = &plan.out_dir else { return Ok(None) };
    fs::create_dir_all(dir)?;
    let ext = match plan.format {
        Format::Csv => "csv",
        Format::Json => "json",
    };
    let data = dir.join(format!("{}.{ext}", plan.name));
    fs::write(&data, render(out, plan.format))?;
    let mut meta = fs::File::create(dir.join(format!("{}.meta.json", plan.name)))?;
    serde_json::to_writer_pretty(&mut meta, &out.metadata)?;
    meta.write_all(b"\n")?;
    Ok(Some(data))
}

/// Aligned text table for the terminal.
pub fn display(table: &Table) -> String {
    let cells: Vec<Vec<String>> = table.rows.iter().map(|r| r.iter().map(|c| c.to_string()).collect()).collect();
    let widths: Vec<usize> = (0..table.columns.len())
        .map(|k| cells.iter().map(|r| r[k].len()).chain([table.columns[k].len()]).max().unwrap_or(0))
        .collect();
    let line = |items: &[String]| -> String {
        let parts: Vec<String> = items.iter().zip(&widths).map(|(s, w)| format!("{s:<w$}")).collect();
        parts.join("  ").trim_end().to_string() + "\n"
    };
    let mut s = line(&table.columns);
    for r in &cells {
        s.push_str(&line(r));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn comparison_rounding() {
        assert_eq!(round_to(0.13916, 4), 0.1392);
        assert_eq!(round_to(0.0, 4), 0.0);
    }

    #[test]
    fn json_rows_carry_twelve_digits() {
        let mut table = Table::new("t", &["scheme", "delta"]);
        table.push(vec!["NONE".into(), (1.0 / 3.0).into()]);
        let out = RunOutput { table, metadata: json!({}) };
        let s = render(&out, Format::Json);
        assert!(s.contains("0.333333333333"));
        assert!(!s.contains("0.3333333333333"));
    }

    #[test]
    fn display_aligns_columns() {
        let mut table = Table::new("t", &["a", "long"]);
        table.push(vec!["xyz".into(), 1.5.into()]);
        assert_eq!(display(&table), "a    long\nxyz  1.5\n");
    }
}
