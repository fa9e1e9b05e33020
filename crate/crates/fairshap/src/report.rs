//! Report output: `report.json` plus CSV side tables rendered from it.

use std::fs;
use std::path::{Path, PathBuf};

use crate::csv_io::{sweep_record, write_rows, write_text, SWEEP_HEADER};
use crate::error::{HarnessError, Result};
use crate::experiment::{metric, ExperimentReport, METRICS};

pub const REPORT_FILE: &str = "report.json";

fn num(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

pub fn load_report(path: &Path) -> Result<ExperimentReport> {
    let text = fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

/// Writes `report.json` and the CSV tables into `dir`; returns the files written.
pub fn write_report(report: &ExperimentReport, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    let path = dir.join(REPORT_FILE);
    write_text(&path, &(serde_json::to_string_pretty(report)? + "\n"))?;
    let mut written = vec![path];
    written.extend(render_tables(report, dir)?);
    Ok(written)
}

/// `aggregate.csv`, `folds.csv`, `diagnostics.csv` and, when a sweep ran,
/// `sweep.csv`.
pub fn render_tables(report: &ExperimentReport, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    let mut written = Vec::new();

    let mut rows = Vec::new();
    for m in &report.methods {
        for (name, a) in &m.aggregate {
            rows.push(vec![
                m.method.to_string(),
                name.clone(),
                num(a.mean),
                num(a.sd),
                a.n.to_string(),
                a.missing.to_string(),
            ]);
        }
        let a = &m.modifications;
        rows.push(vec![
            m.method.to_string(),
            "modifications".into(),
            num(a.mean),
            num(a.sd),
            a.n.to_string(),
            a.missing.to_string(),
        ]);
    }
    let path = dir.join("aggregate.csv");
    write_rows(&path, &["method", "metric", "mean", "sd", "n", "missing"], &rows)?;
    written.push(path);

    let mut header = vec!["method", "fold", "test_adjustment_necessity"];
    header.extend(METRICS);
    header.extend(["modifications", "test_rows_unchanged", "error"]);
    let mut rows = Vec::new();
    for m in &report.methods {
        for f in &m.folds {
            let mut row = vec![
                m.method.to_string(),
                f.fold.to_string(),
                m.test_adjustment_necessity.to_string(),
            ];
            row.extend(METRICS.iter().map(|&k| num(f.report.as_ref().and_then(|r| metric(r, k)))));
            row.push(f.modifications.map(|n| n.to_string()).unwrap_or_default());
            row.push(f.test_rows_unchanged().to_string());
            row.push(f.error.clone().unwrap_or_default());
            rows.push(row);
        }
    }
    let path = dir.join("folds.csv");
    write_rows(&path, &header, &rows)?;
    written.push(path);

    let rows: Vec<Vec<String>> = report
        .diagnostics
        .iter()
        .map(|d| {
            let s = &d.stats;
            vec![
                d.fold.to_string(),
                s.rows.to_string(),
                s.mean.to_string(),
                s.median.to_string(),
                s.max.to_string(),
                s.grand_max.to_string(),
            ]
        })
        .collect();
    let path = dir.join("diagnostics.csv");
    write_rows(&path, &["fold", "rows", "mean_gap", "median_gap", "max_gap", "grand_max_gap"], &rows)?;
    written.push(path);

    if let Some(sweep) = &report.sweep {
        let mut rows = Vec::new();
        for (k, fold) in sweep.folds.iter().enumerate() {
            rows.extend(fold.iter().map(|p| sweep_record(&k.to_string(), p)));
        }
        for p in &sweep.mean {
            rows.push(vec![
                "mean".into(),
                p.n_modifications.to_string(),
                p.accuracy.to_string(),
                p.dr.to_string(),
                p.dp.to_string(),
                num(p.eo),
                num(p.pqp),
                p.dr_reduction_pct.to_string(),
            ]);
        }
        let path = dir.join("sweep.csv");
        write_rows(&path, &SWEEP_HEADER, &rows)?;
        written.push(path);
    }
    Ok(written)
}
