//! CSV input and the CSV side tables.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use fairshap_core::dataset::{DatasetBuilder, FeatureSchema, TabularDataset};
use fairshap_core::fairshap::{ModificationLog, SweepPoint};
use fairshap_core::matching::MatchingPlan;
use fairshap_core::Matrix;

use crate::error::{HarnessError, Result};

/// Reads a headed, comma-separated file against `schema`.
pub fn load_dataset(path: &Path, schema: &FeatureSchema) -> Result<TabularDataset> {
    let file = File::open(path).map_err(|e| HarnessError::io(path, e))?;
    read_dataset(file, schema).map_err(|e| match e {
        HarnessError::Csv { source, .. } => HarnessError::csv(path, source),
        HarnessError::Core(source) => HarnessError::Data {
            path: path.to_path_buf(),
            source,
        },
        other => other,
    })
}

pub fn read_dataset<R: std::io::Read>(reader: R, schema: &FeatureSchema) -> Result<TabularDataset> {
    let mut csv = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let header: Vec<String> = csv
        .headers()
        .map_err(|e| HarnessError::csv("<input>", e))?
        .iter()
        .map(str::to_owned)
        .collect();
    let mut builder = DatasetBuilder::new(schema.clone(), &header)?;
    for record in csv.records() {
        let record = record.map_err(|e| HarnessError::csv("<input>", e))?;
        let fields: Vec<&str> = record.iter().collect();
        builder.push_record(&fields)?;
    }
    Ok(builder.finish()?)
}

fn writer(path: &Path) -> Result<csv::Writer<File>> {
    csv::Writer::from_path(path).map_err(|e| HarnessError::csv(path, e))
}

fn finish(mut w: csv::Writer<File>, path: &Path) -> Result<()> {
    w.flush().map_err(|e| HarnessError::io(path, e))
}

/// `i,j,mass` for every nonzero plan entry, with plan rows and columns
/// renamed through `target_ids` and `other_ids`.
pub fn write_plan(path: &Path, plan: &MatchingPlan, target_ids: &[usize], other_ids: &[usize]) -> Result<()> {
    let mut w = writer(path)?;
    let err = |e| HarnessError::csv(path, e);
    w.write_record(["i", "j", "mass"]).map_err(err)?;
    for i in 0..plan.target_rows() {
        for (j, mass) in plan.row_support(i) {
            w.write_record([target_ids[i].to_string(), other_ids[j].to_string(), mass.to_string()])
                .map_err(err)?;
        }
    }
    finish(w, path)
}

/// `row,raw_feature,phi` in row-major order.
pub fn write_phi(path: &Path, phi: &Matrix, feature_names: &[String], rows: &[usize]) -> Result<()> {
    let mut w = writer(path)?;
    let err = |e| HarnessError::csv(path, e);
    w.write_record(["row", "raw_feature", "phi"]).map_err(err)?;
    for i in 0..phi.rows() {
        for (k, name) in feature_names.iter().enumerate() {
            w.write_record([rows[i].to_string(), name.clone(), phi.get(i, k).to_string()])
                .map_err(err)?;
        }
    }
    finish(w, path)
}

fn join(values: &[f64]) -> String {
    values.iter().map(f64::to_string).collect::<Vec<_>>().join(";")
}

pub fn write_log(path: &Path, log: &ModificationLog, feature_names: &[String]) -> Result<()> {
    let mut w = writer(path)?;
    let err = |e| HarnessError::csv(path, e);
    w.write_record(["order", "row", "group", "raw_feature", "phi", "source_row", "old", "new"])
        .map_err(err)?;
    for (order, e) in log.entries.iter().enumerate() {
        w.write_record([
            order.to_string(),
            e.row.to_string(),
            e.group.to_string(),
            feature_names[e.feature].clone(),
            e.phi.to_string(),
            e.source.to_string(),
            join(&e.old),
            join(&e.new),
        ])
        .map_err(err)?;
    }
    finish(w, path)
}

fn opt(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

pub const SWEEP_HEADER: [&str; 8] = [
    "fold",
    "n_modifications",
    "accuracy",
    "dr",
    "dp",
    "eo",
    "pqp",
    "dr_reduction_pct",
];

/// One row per sweep point; `fold` is the fold index or `mean`.
pub fn sweep_record(fold: &str, p: &SweepPoint) -> Vec<String> {
    vec![
        fold.to_string(),
        p.n_modifications.to_string(),
        p.report.accuracy.to_string(),
        p.report.dr.to_string(),
        p.report.dp.to_string(),
        opt(p.report.eo),
        opt(p.report.pqp),
        p.dr_reduction_pct.to_string(),
    ]
}

pub fn write_rows(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut w = writer(path)?;
    let err = |e| HarnessError::csv(path, e);
    w.write_record(header).map_err(err)?;
    for r in rows {
        w.write_record(r).map_err(err)?;
    }
    finish(w, path)
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut f = File::create(path).map_err(|e| HarnessError::io(path, e))?;
    f.write_all(text.as_bytes()).map_err(|e| HarnessError::io(path, e))
}
