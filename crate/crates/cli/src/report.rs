//! Evaluation reports (row CSV plus aggregate JSON) and comparison tables.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use treebranch_core::metrics::{aggregate, Aggregates, EvalRow, RunStatus};

use crate::config::RunConfig;
use crate::CliError;

pub const FORMAT_VERSION: u32 = 1;

pub const REL_STD_DEFINITION: &str =
    "per-instance std = population std of node counts across seeds / per-instance mean, averaged over instances";

#[derive(Debug, Serialize, Deserialize)]
struct CsvRow {
    instance: String,
    seed: u64,
    policy: String,
    node_count: usize,
    wall_time: f64,
    status: String,
}

pub fn write_rows(path: &Path, rows: &[EvalRow]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::io(path, e))?;
    for r in rows {
        w.serialize(CsvRow {
            instance: r.instance.clone(),
            seed: r.seed,
            policy: r.policy.clone(),
            node_count: r.node_count,
            wall_time: r.wall_time,
            status: r.status.as_str().to_string(),
        })
        .map_err(|e| CliError::io(path, e))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

pub fn read_rows(path: &Path) -> Result<Vec<EvalRow>, CliError> {
    let mut r = csv::Reader::from_path(path).map_err(|e| CliError::io(path, e))?;
    r.deserialize()
        .map(|rec| {
            let rec: CsvRow = rec.map_err(|e| CliError::io(path, e))?;
            let status = RunStatus::parse(&rec.status)
                .ok_or_else(|| CliError::Runtime(format!("{}: unknown status `{}`", path.display(), rec.status)))?;
            Ok(EvalRow {
                instance: rec.instance,
                seed: rec.seed,
                policy: rec.policy,
                node_count: rec.node_count,
                wall_time: rec.wall_time,
                status,
            })
        })
        .collect()
}

fn finite_or_null(v: f64) -> Value {
    if v.is_finite() {
        json!(v)
    } else {
        Value::Null
    }
}

pub fn aggregates_json(a: &Aggregates) -> Value {
    json!({
        "geomean_nodes": finite_or_null(a.geomean_nodes),
        "geomean_time": finite_or_null(a.geomean_time),
        "per_instance_rel_std": finite_or_null(a.per_instance_rel_std),
        "runs": a.runs,
        "failures": a.failures,
    })
}

/// Aggregate report written next to the row CSV.
pub fn report_json(policy: &str, rows_file: &str, seeds: &[u64], rows: &[EvalRow], cfg: &RunConfig) -> Value {
    json!({
        "format_version": FORMAT_VERSION,
        "command": "evaluate",
        "policy": policy,
        "rows": rows_file,
        "seeds": seeds,
        "rel_std_definition": REL_STD_DEFINITION,
        "aggregates": aggregates_json(&aggregate(rows)),
        "config": cfg.entries(),
    })
}

/// Compared columns; smaller is better for each.
const COLUMNS: [&str; 3] = ["geomean_nodes", "geomean_time", "per_instance_rel_std"];

#[derive(Debug, Clone, PartialEq)]
pub struct ReportSummary {
    pub label: String,
    pub values: [f64; 3],
    pub runs: u64,
    pub failures: u64,
}

pub fn load_summary(path: &Path) -> Result<ReportSummary, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let v: Value = serde_json::from_str(&text).map_err(|e| CliError::io(path, e))?;
    let missing = |what: &str| CliError::Runtime(format!("{}: missing `{what}`", path.display()));
    let agg = v.get("aggregates").ok_or_else(|| missing("aggregates"))?;
    let mut values = [0.0; 3];
    for (slot, col) in values.iter_mut().zip(COLUMNS) {
        let x = agg.get(col).ok_or_else(|| missing(col))?;
        *slot = if x.is_null() { f64::NAN } else { x.as_f64().ok_or_else(|| missing(col))? };
    }
    let count = |k: &str| agg.get(k).and_then(Value::as_u64).ok_or_else(|| missing(k));
    Ok(ReportSummary {
        label: v.get("policy").and_then(Value::as_str).ok_or_else(|| missing("policy"))?.to_string(),
        values,
        runs: count("runs")?,
        failures: count("failures")?,
    })
}

/// `best[i][c]` is set when report `i` holds the smallest value of column `c`.
pub fn best_flags(reports: &[ReportSummary]) -> Vec<[bool; 3]> {
    let mut mins = [f64::INFINITY; 3];
    for r in reports {
        for c in 0..3 {
            if r.values[c] < mins[c] {
                mins[c] = r.values[c];
            }
        }
    }
    reports
        .iter()
        .map(|r| std::array::from_fn(|c| r.values[c].is_finite() && r.values[c] == mins[c]))
        .collect()
}

fn cell(v: f64, best: bool) -> String {
    let s = if v.is_finite() { format!("{v:.4}") } else { "n/a".to_string() };
    if best {
        s + " *"
    } else {
        s
    }
}

/// Aligned text table; `*` marks the best value of each column.
pub fn render_table(reports: &[ReportSummary]) -> String {
    let flags = best_flags(reports);
    let header = ["policy", "geomean_nodes", "geomean_time", "rel_std", "runs", "failures"];
    let mut rows: Vec<Vec<String>> = vec![header.iter().map(|s| s.to_string()).collect()];
    for (r, f) in reports.iter().zip(&flags) {
        let mut row = vec![r.label.clone()];
        row.extend((0..3).map(|c| cell(r.values[c], f[c])));
        row.push(r.runs.to_string());
        row.push(r.failures.to_string());
        rows.push(row);
    }
    let widths: Vec<usize> = (0..header.len())
        .map(|c| rows.iter().map(|r| r[c].chars().count()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    writeln!(out, "# {REL_STD_DEFINITION}; * = best").unwrap();
    for row in &rows {
        let line: Vec<String> = row
            .iter()
            .enumerate()
            .map(|(c, s)| if c == 0 { format!("{s:<w$}", w = widths[c]) } else { format!("{s:>w$}", w = widths[c]) })
            .collect();
        writeln!(out, "{}", line.join("  ").trim_end()).unwrap();
    }
    out
}

pub fn write_table_csv(path: &Path, reports: &[ReportSummary]) -> Result<(), CliError> {
    let flags = best_flags(reports);
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::io(path, e))?;
    let io = |e: csv::Error| CliError::io(path, e);
    w.write_record(["policy", "geomean_nodes", "geomean_time", "per_instance_rel_std", "runs", "failures", "best"])
        .map_err(io)?;
    for (r, f) in reports.iter().zip(&flags) {
        let best: Vec<&str> = (0..3).filter(|&c| f[c]).map(|c| COLUMNS[c]).collect();
        let mut rec = vec![r.label.clone()];
        rec.extend(r.values.iter().map(|v| v.to_string()));
        rec.push(r.runs.to_string());
        rec.push(r.failures.to_string());
        rec.push(best.join(";"));
        w.write_record(&rec).map_err(io)?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}
