//! Tabular datasets: schema, raw records, one-hot + standardization encoding,
//! the sensitive-attribute split, and stratified folds.
//!
//! The sensitive attribute is never an encoded column. It travels next to the
//! encoded matrix as a `0/1` vector and is handed to predictors explicitly.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::ops::Range;

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum FeatureKind {
    Numeric,
    Categorical,
}

#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FeatureSpec {
    pub name: String,
    pub kind: FeatureKind,
}

impl FeatureSpec {
    pub fn numeric(name: &str) -> Self {
        Self {
            name: name.to_string(),
            kind: FeatureKind::Numeric,
        }
    }

    pub fn categorical(name: &str) -> Self {
        Self {
            name: name.to_string(),
            kind: FeatureKind::Categorical,
        }
    }
}

/// Describes how raw columns map onto features, the label, and the sensitive
/// attribute. `features` lists the non-sensitive, non-label features in the
/// order they are encoded.
#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FeatureSchema {
    pub features: Vec<FeatureSpec>,
    pub label_name: String,
    pub label_positive_values: BTreeSet<String>,
    pub sensitive_name: String,
    pub sensitive_positive_values: BTreeSet<String>,
    /// Raw columns present in the source that are deliberately dropped.
    pub ignored: Vec<String>,
}

/// Column positions of a schema inside a concrete header.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HeaderBinding {
    pub features: Vec<usize>,
    pub label: usize,
    pub sensitive: usize,
    pub width: usize,
}

impl FeatureSchema {
    pub fn validate(&self) -> Result<()> {
        if self.label_name == self.sensitive_name {
            return Err(Error::Schema(
                "label and sensitive attribute must be different columns".into(),
            ));
        }
        let mut seen = BTreeSet::new();
        for name in self
            .features
            .iter()
            .map(|f| f.name.as_str())
            .chain([self.label_name.as_str(), self.sensitive_name.as_str()])
            .chain(self.ignored.iter().map(String::as_str))
        {
            if !seen.insert(name) {
                return Err(Error::Schema(format!("column `{name}` is declared more than once")));
            }
        }
        if self.sensitive_positive_values.is_empty() {
            return Err(Error::Schema("no sensitive values map to A=1".into()));
        }
        if self.label_positive_values.is_empty() {
            return Err(Error::Schema("no label values map to y=1".into()));
        }
        Ok(())
    }

    /// Locates every schema column in `header`. Columns in the header that the
    /// schema does not mention are rejected.
    pub fn bind_header<S: AsRef<str>>(&self, header: &[S]) -> Result<HeaderBinding> {
        self.validate()?;
        let mut position = BTreeMap::new();
        for (i, h) in header.iter().enumerate() {
            let h = h.as_ref().trim();
            if position.insert(h, i).is_some() {
                return Err(Error::Schema(format!("column `{h}` appears twice in the header")));
            }
        }
        let find = |name: &str| {
            position
                .get(name)
                .copied()
                .ok_or_else(|| Error::Schema(format!("missing column `{name}`")))
        };
        let features = self
            .features
            .iter()
            .map(|f| find(&f.name))
            .collect::<Result<Vec<_>>>()?;
        let label = find(&self.label_name)?;
        let sensitive = find(&self.sensitive_name)?;
        for ignored in &self.ignored {
            find(ignored)?;
        }
        let declared = self.features.len() + 2 + self.ignored.len();
        if declared != header.len() {
            let known: BTreeSet<&str> = self
                .features
                .iter()
                .map(|f| f.name.as_str())
                .chain([self.label_name.as_str(), self.sensitive_name.as_str()])
                .chain(self.ignored.iter().map(String::as_str))
                .collect();
            let extra = header
                .iter()
                .map(|h| h.as_ref().trim())
                .find(|h| !known.contains(h))
                .unwrap_or("?");
            return Err(Error::Schema(format!(
                "column `{extra}` has no declared kind (list it as numeric, categorical, or ignored)"
            )));
        }
        Ok(HeaderBinding {
            features,
            label,
            sensitive,
            width: header.len(),
        })
    }
}

/// One raw cell of a non-sensitive feature.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum RawValue {
    Numeric(f64),
    Category(String),
}

/// Raw rows plus binarized labels and sensitive values.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularDataset {
    schema: FeatureSchema,
    rows: Vec<Vec<RawValue>>,
    labels: Vec<u8>,
    sensitive: Vec<u8>,
}

impl TabularDataset {
    pub fn new(
        schema: FeatureSchema,
        rows: Vec<Vec<RawValue>>,
        labels: Vec<u8>,
        sensitive: Vec<u8>,
    ) -> Result<Self> {
        schema.validate()?;
        if rows.is_empty() {
            return Err(Error::Dataset("dataset has no rows".into()));
        }
        if rows.len() != labels.len() || rows.len() != sensitive.len() {
            return Err(Error::Dimension(format!(
                "{} rows, {} labels, {} sensitive values",
                rows.len(),
                labels.len(),
                sensitive.len()
            )));
        }
        for (i, row) in rows.iter().enumerate() {
            if row.len() != schema.features.len() {
                return Err(Error::Row {
                    row: i,
                    message: format!("{} cells, expected {}", row.len(), schema.features.len()),
                });
            }
            for (cell, spec) in row.iter().zip(&schema.features) {
                match (cell, spec.kind) {
                    (RawValue::Numeric(v), FeatureKind::Numeric) if v.is_finite() => {}
                    (RawValue::Category(_), FeatureKind::Categorical) => {}
                    _ => {
                        return Err(Error::Row {
                            row: i,
                            message: format!("cell of `{}` does not match its kind", spec.name),
                        })
                    }
                }
            }
        }
        if labels.iter().chain(&sensitive).any(|&v| v > 1) {
            return Err(Error::Dataset("labels and sensitive values must be 0 or 1".into()));
        }
        let groups = count_binary(&sensitive);
        if groups[0] == 0 {
            return Err(Error::Dataset("sensitive group A=0 empty".into()));
        }
        if groups[1] == 0 {
            return Err(Error::Dataset("sensitive group A=1 empty".into()));
        }
        let classes = count_binary(&labels);
        if classes[0] == 0 || classes[1] == 0 {
            return Err(Error::Dataset("both label classes must be present".into()));
        }
        Ok(Self {
            schema,
            rows,
            labels,
            sensitive,
        })
    }

    pub fn schema(&self) -> &FeatureSchema {
        &self.schema
    }

    pub fn rows(&self) -> &[Vec<RawValue>] {
        &self.rows
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn sensitive(&self) -> &[u8] {
        &self.sensitive
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// `[|A=0|, |A=1|]`
    pub fn group_sizes(&self) -> [usize; 2] {
        count_binary(&self.sensitive)
    }
}

pub(crate) fn count_binary(values: &[u8]) -> [usize; 2] {
    let ones = values.iter().filter(|&&v| v == 1).count();
    [values.len() - ones, ones]
}

/// Incrementally parses string records against a bound header.
#[derive(Debug)]
pub struct DatasetBuilder {
    schema: FeatureSchema,
    binding: HeaderBinding,
    rows: Vec<Vec<RawValue>>,
    labels: Vec<u8>,
    sensitive: Vec<u8>,
}

impl DatasetBuilder {
    pub fn new<S: AsRef<str>>(schema: FeatureSchema, header: &[S]) -> Result<Self> {
        let binding = schema.bind_header(header)?;
        Ok(Self {
            schema,
            binding,
            rows: Vec::new(),
            labels: Vec::new(),
            sensitive: Vec::new(),
        })
    }

    /// Parses one data record. Row indices in errors are zero-based data rows.
    pub fn push_record<S: AsRef<str>>(&mut self, record: &[S]) -> Result<()> {
        let row = self.rows.len();
        if record.len() != self.binding.width {
            return Err(Error::Row {
                row,
                message: format!("{} fields, expected {}", record.len(), self.binding.width),
            });
        }
        let cell = |i: usize| record[i].as_ref().trim();
        let mut values = Vec::with_capacity(self.binding.features.len());
        for (spec, &pos) in self.schema.features.iter().zip(&self.binding.features) {
            let raw = cell(pos);
            values.push(match spec.kind {
                FeatureKind::Numeric => {
                    let v: f64 = raw.parse().map_err(|_| Error::Row {
                        row,
                        message: format!("cannot parse `{raw}` in numeric column `{}`", spec.name),
                    })?;
                    if !v.is_finite() {
                        return Err(Error::Row {
                            row,
                            message: format!("non-finite value in column `{}`", spec.name),
                        });
                    }
                    RawValue::Numeric(v)
                }
                FeatureKind::Categorical => RawValue::Category(raw.to_string()),
            });
        }
        let label = self.schema.label_positive_values.contains(cell(self.binding.label));
        let sensitive = self
            .schema
            .sensitive_positive_values
            .contains(cell(self.binding.sensitive));
        self.rows.push(values);
        self.labels.push(label as u8);
        self.sensitive.push(sensitive as u8);
        Ok(())
    }

    pub fn finish(self) -> Result<TabularDataset> {
        if self.rows.is_empty() {
            return Err(Error::Dataset("file contains no data rows".into()));
        }
        TabularDataset::new(self.schema, self.rows, self.labels, self.sensitive)
    }
}

/// How one raw feature is laid out in the encoded matrix.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum FeatureEncoding {
    /// `std == 0` marks a constant column, encoded as zeros.
    Numeric { mean: f64, std: f64 },
    /// Categories in lexical order, one column each.
    Categorical { categories: Vec<String> },
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EncodedFeature {
    pub name: String,
    pub encoding: FeatureEncoding,
    pub start: usize,
    pub width: usize,
}

impl EncodedFeature {
    pub fn columns(&self) -> Range<usize> {
        self.start..self.start + self.width
    }
}

/// Source of one encoded column.
#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ColumnInfo {
    pub feature: usize,
    pub category: Option<String>,
}

/// Fitted encoder: one-hot for categoricals, z-scores for numerics.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FeatureLayout {
    pub features: Vec<EncodedFeature>,
    pub columns: Vec<ColumnInfo>,
}

/// Relative variance floor below which a numeric column counts as constant.
const CONSTANT_TOLERANCE: f64 = 1e-12;

impl FeatureLayout {
    /// Fits encoding parameters on `fit_indices` only.
    pub fn fit(dataset: &TabularDataset, fit_indices: &[usize]) -> Result<Self> {
        if fit_indices.is_empty() {
            return Err(Error::InvalidParameter("fit set is empty".into()));
        }
        if let Some(&bad) = fit_indices.iter().find(|&&i| i >= dataset.len()) {
            return Err(Error::InvalidParameter(format!("fit index {bad} out of range")));
        }
        let mut features = Vec::with_capacity(dataset.schema.features.len());
        let mut columns = Vec::new();
        for (k, spec) in dataset.schema.features.iter().enumerate() {
            let start = columns.len();
            let encoding = match spec.kind {
                FeatureKind::Numeric => {
                    let values: Vec<f64> = fit_indices
                        .iter()
                        .map(|&i| match &dataset.rows[i][k] {
                            RawValue::Numeric(v) => *v,
                            RawValue::Category(_) => unreachable!("validated at construction"),
                        })
                        .collect();
                    let n = values.len() as f64;
                    let mean = values.iter().sum::<f64>() / n;
                    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
                    let scale = mean.abs().max(1.0);
                    let std = if var <= CONSTANT_TOLERANCE * scale * scale {
                        0.0
                    } else {
                        libm::sqrt(var)
                    };
                    columns.push(ColumnInfo {
                        feature: k,
                        category: None,
                    });
                    FeatureEncoding::Numeric { mean, std }
                }
                FeatureKind::Categorical => {
                    let categories: BTreeSet<&str> = fit_indices
                        .iter()
                        .map(|&i| match &dataset.rows[i][k] {
                            RawValue::Category(c) => c.as_str(),
                            RawValue::Numeric(_) => unreachable!("validated at construction"),
                        })
                        .collect();
                    let categories: Vec<String> =
                        categories.into_iter().map(ToString::to_string).collect();
                    for c in &categories {
                        columns.push(ColumnInfo {
                            feature: k,
                            category: Some(c.clone()),
                        });
                    }
                    FeatureEncoding::Categorical { categories }
                }
            };
            features.push(EncodedFeature {
                name: spec.name.clone(),
                encoding,
                start,
                width: columns.len() - start,
            });
        }
        Ok(Self { features, columns })
    }

    pub fn n_features(&self) -> usize {
        self.features.len()
    }

    pub fn n_columns(&self) -> usize {
        self.columns.len()
    }

    pub fn feature_names(&self) -> Vec<String> {
        self.features.iter().map(|f| f.name.clone()).collect()
    }

    pub fn players(&self) -> PlayerMap {
        PlayerMap::new(self.features.iter().map(EncodedFeature::columns).collect())
            .expect("layout blocks are contiguous")
    }

    /// Encodes raw rows; returns the matrix and the number of cells whose
    /// category was not seen at fit time (encoded as an all-zero block).
    pub fn transform_rows(&self, rows: &[Vec<RawValue>]) -> Result<(Matrix, usize)> {
        let mut out = Matrix::zeros(rows.len(), self.n_columns());
        let mut unseen = 0;
        for (i, row) in rows.iter().enumerate() {
            if row.len() != self.features.len() {
                return Err(Error::Row {
                    row: i,
                    message: format!("{} cells, expected {}", row.len(), self.features.len()),
                });
            }
            let dst = out.row_mut(i);
            for (feature, cell) in self.features.iter().zip(row) {
                match (&feature.encoding, cell) {
                    (FeatureEncoding::Numeric { mean, std }, RawValue::Numeric(v)) => {
                        dst[feature.start] = if *std == 0.0 { 0.0 } else { (v - mean) / std };
                    }
                    (FeatureEncoding::Categorical { categories }, RawValue::Category(c)) => {
                        match categories.binary_search_by(|probe| probe.as_str().cmp(c)) {
                            Ok(pos) => dst[feature.start + pos] = 1.0,
                            Err(_) => unseen += 1,
                        }
                    }
                    _ => {
                        return Err(Error::Row {
                            row: i,
                            message: format!("cell of `{}` does not match its kind", feature.name),
                        })
                    }
                }
            }
        }
        Ok((out, unseen))
    }

    pub fn transform(&self, dataset: &TabularDataset) -> Result<EncodedMatrix> {
        let (values, unseen_categories) = self.transform_rows(&dataset.rows)?;
        Ok(EncodedMatrix {
            values,
            layout: self.clone(),
            unseen_categories,
        })
    }

    /// Inverts the encoding of one row. A categorical block with no active
    /// column (unseen category) decodes to `None`.
    pub fn decode_row(&self, encoded: &[f64]) -> Vec<Option<RawValue>> {
        self.features
            .iter()
            .map(|feature| match &feature.encoding {
                FeatureEncoding::Numeric { mean, std } => {
                    Some(RawValue::Numeric(encoded[feature.start] * std + mean))
                }
                FeatureEncoding::Categorical { categories } => encoded[feature.columns()]
                    .iter()
                    .position(|&v| v > 0.5)
                    .map(|pos| RawValue::Category(categories[pos].clone())),
            })
            .collect()
    }
}

/// Encoded design matrix with its reversible column map.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedMatrix {
    pub values: Matrix,
    pub layout: FeatureLayout,
    /// Categorical cells that fell outside the fitted categories.
    pub unseen_categories: usize,
}

impl EncodedMatrix {
    pub fn decode(&self) -> Vec<Vec<Option<RawValue>>> {
        self.values
            .iter_rows()
            .map(|r| self.layout.decode_row(r))
            .collect()
    }
}

/// Fits the encoder on `fit_indices` and encodes every row of `dataset`.
pub fn encode(dataset: &TabularDataset, fit_indices: &[usize]) -> Result<EncodedMatrix> {
    FeatureLayout::fit(dataset, fit_indices)?.transform(dataset)
}

/// Groups encoded columns into players (raw features). Ranges are contiguous,
/// disjoint, and cover `0..n_columns`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlayerMap {
    ranges: Vec<Range<usize>>,
}

impl PlayerMap {
    pub fn new(ranges: Vec<Range<usize>>) -> Result<Self> {
        let mut next = 0;
        for r in &ranges {
            if r.start != next || r.end <= r.start {
                return Err(Error::InvalidParameter(
                    "player ranges must be contiguous and non-empty".into(),
                ));
            }
            next = r.end;
        }
        Ok(Self { ranges })
    }

    /// One player per column.
    pub fn singletons(columns: usize) -> Self {
        Self {
            ranges: (0..columns).map(|c| c..c + 1).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.ranges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ranges.is_empty()
    }

    pub fn columns(&self) -> usize {
        self.ranges.last().map_or(0, |r| r.end)
    }

    pub fn range(&self, player: usize) -> Range<usize> {
        self.ranges[player].clone()
    }

    pub fn ranges(&self) -> &[Range<usize>] {
        &self.ranges
    }
}

/// Rows of an encoded matrix partitioned by the sensitive attribute.
#[derive(Debug, Clone, PartialEq)]
pub struct SensitiveSplit {
    pub group_a0: Matrix,
    pub group_a1: Matrix,
    pub index_a0: Vec<usize>,
    pub index_a1: Vec<usize>,
}

impl SensitiveSplit {
    pub fn group(&self, a: u8) -> &Matrix {
        if a == 0 {
            &self.group_a0
        } else {
            &self.group_a1
        }
    }

    pub fn indices(&self, a: u8) -> &[usize] {
        if a == 0 {
            &self.index_a0
        } else {
            &self.index_a1
        }
    }

    /// Reassembles a parent-ordered matrix from (possibly modified) groups.
    pub fn merge(&self, group_a0: &Matrix, group_a1: &Matrix) -> Result<Matrix> {
        if group_a0.rows() != self.index_a0.len() || group_a1.rows() != self.index_a1.len() {
            return Err(Error::Dimension("group sizes differ from the split".into()));
        }
        if group_a0.cols() != group_a1.cols() {
            return Err(Error::Dimension("groups have different widths".into()));
        }
        let n = self.index_a0.len() + self.index_a1.len();
        let mut out = Matrix::zeros(n, group_a0.cols());
        for (local, &parent) in self.index_a0.iter().enumerate() {
            out.row_mut(parent).copy_from_slice(group_a0.row(local));
        }
        for (local, &parent) in self.index_a1.iter().enumerate() {
            out.row_mut(parent).copy_from_slice(group_a1.row(local));
        }
        Ok(out)
    }
}

pub fn split_by_sensitive(values: &Matrix, sensitive: &[u8]) -> Result<SensitiveSplit> {
    if sensitive.len() != values.rows() {
        return Err(Error::Dimension(format!(
            "{} sensitive values for {} rows",
            sensitive.len(),
            values.rows()
        )));
    }
    let mut index_a0 = Vec::new();
    let mut index_a1 = Vec::new();
    for (i, &a) in sensitive.iter().enumerate() {
        match a {
            0 => index_a0.push(i),
            1 => index_a1.push(i),
            other => {
                return Err(Error::Dataset(format!("sensitive value {other} at row {i} is not binary")))
            }
        }
    }
    if index_a0.is_empty() || index_a1.is_empty() {
        return Err(Error::Dataset("both sensitive groups must be non-empty".into()));
    }
    Ok(SensitiveSplit {
        group_a0: values.select_rows(&index_a0),
        group_a1: values.select_rows(&index_a1),
        index_a0,
        index_a1,
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Fold {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Stratification {
    LabelAndSensitive,
    /// Some (label, sensitive) cell had fewer than `k` rows.
    LabelOnly,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldPlan {
    pub folds: Vec<Fold>,
    pub stratification: Stratification,
}

pub fn kfold_split(dataset: &TabularDataset, k: usize, seed: u64) -> Result<FoldPlan> {
    stratified_kfold(dataset.labels(), dataset.sensitive(), k, seed)
}

/// Stratified k-fold over `(label, sensitive)` cells. Each stratum is shuffled
/// and dealt round-robin, continuing the deal across strata, so fold sizes
/// differ by at most one.
pub fn stratified_kfold(labels: &[u8], sensitive: &[u8], k: usize, seed: u64) -> Result<FoldPlan> {
    let n = labels.len();
    if sensitive.len() != n {
        return Err(Error::Dimension("labels and sensitive values differ in length".into()));
    }
    if k < 2 || k > n {
        return Err(Error::InvalidParameter(format!("k = {k} must lie in [2, {n}]")));
    }
    let mut joint: BTreeMap<(u8, u8), Vec<usize>> = BTreeMap::new();
    for i in 0..n {
        joint.entry((labels[i], sensitive[i])).or_default().push(i);
    }
    let (strata, stratification) = if joint.values().all(|s| s.len() >= k) {
        (joint.into_values().collect::<Vec<_>>(), Stratification::LabelAndSensitive)
    } else {
        let mut by_label: BTreeMap<u8, Vec<usize>> = BTreeMap::new();
        for i in 0..n {
            by_label.entry(labels[i]).or_default().push(i);
        }
        (by_label.into_values().collect(), Stratification::LabelOnly)
    };
    let mut rng = rng::seeded(seed);
    let mut test_sets: Vec<Vec<usize>> = (0..k).map(|_| Vec::new()).collect();
    let mut deal = 0usize;
    for mut stratum in strata {
        stratum.shuffle(&mut rng);
        for i in stratum {
            test_sets[deal % k].push(i);
            deal += 1;
        }
    }
    let folds = test_sets
        .into_iter()
        .map(|mut test| {
            test.sort_unstable();
            let mut in_test = alloc::vec![false; n];
            for &i in &test {
                in_test[i] = true;
            }
            let train = (0..n).filter(|&i| !in_test[i]).collect();
            Fold { train, test }
        })
        .collect();
    Ok(FoldPlan {
        folds,
        stratification,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn schema_age_sex() -> FeatureSchema {
        FeatureSchema {
            features: vec![FeatureSpec::numeric("age")],
            label_name: "y".into(),
            label_positive_values: ["1".to_string()].into_iter().collect(),
            sensitive_name: "sex".into(),
            sensitive_positive_values: ["female".to_string()].into_iter().collect(),
            ignored: vec![],
        }
    }

    fn build(schema: FeatureSchema, header: &[&str], rows: &[&[&str]]) -> Result<TabularDataset> {
        let mut b = DatasetBuilder::new(schema, header)?;
        for r in rows {
            b.push_record(r)?;
        }
        b.finish()
    }

    #[test]
    fn sensitive_column_is_binarized() {
        let ds = build(
            schema_age_sex(),
            &["age", "sex", "y"],
            &[&["30", "female", "1"], &["40", "male", "0"], &["50", "female", "0"]],
        )
        .unwrap();
        assert_eq!(ds.sensitive(), &[1, 0, 1]);
        assert_eq!(ds.labels(), &[1, 0, 0]);
        assert_eq!(ds.group_sizes(), [1, 2]);
    }

    #[test]
    fn empty_positive_group_is_rejected() {
        let err = build(
            schema_age_sex(),
            &["age", "sex", "y"],
            &[&["30", "male", "1"], &["40", "male", "0"]],
        )
        .unwrap_err();
        assert_eq!(err, Error::Dataset("sensitive group A=1 empty".into()));
    }

    #[test]
    fn header_and_cell_errors() {
        let err = DatasetBuilder::new(schema_age_sex(), &["age", "y"]).unwrap_err();
        assert!(matches!(err, Error::Schema(ref m) if m.contains("sex")));

        let err = DatasetBuilder::new(schema_age_sex(), &["age", "sex", "y", "zip"]).unwrap_err();
        assert!(matches!(err, Error::Schema(ref m) if m.contains("zip")));

        let mut b = DatasetBuilder::new(schema_age_sex(), &["age", "sex", "y"]).unwrap();
        b.push_record(&["1", "male", "0"]).unwrap();
        let err = b.push_record(&["old", "male", "0"]).unwrap_err();
        assert!(matches!(err, Error::Row { row: 1, .. }));

        let b = DatasetBuilder::new(schema_age_sex(), &["age", "sex", "y"]).unwrap();
        assert!(matches!(b.finish(), Err(Error::Dataset(_))));
    }

    fn mixed_dataset() -> TabularDataset {
        let schema = FeatureSchema {
            features: vec![
                FeatureSpec::numeric("x"),
                FeatureSpec::categorical("colour"),
                FeatureSpec::numeric("flat"),
            ],
            label_name: "y".into(),
            label_positive_values: ["1".to_string()].into_iter().collect(),
            sensitive_name: "a".into(),
            sensitive_positive_values: ["1".to_string()].into_iter().collect(),
            ignored: vec![],
        };
        build(
            schema,
            &["x", "colour", "flat", "a", "y"],
            &[
                &["1", "red", "5", "0", "1"],
                &["2", "blue", "5", "1", "0"],
                &["3", "red", "5", "1", "1"],
                &["4", "green", "5", "0", "0"],
            ],
        )
        .unwrap()
    }

    #[test]
    fn encoding_standardizes_and_one_hots() {
        let ds = mixed_dataset();
        let enc = encode(&ds, &[0, 1, 2]).unwrap();
        // x, blue, red, flat (green unseen at fit time)
        assert_eq!(enc.layout.n_columns(), 4);
        assert_eq!(enc.layout.columns[1].category.as_deref(), Some("blue"));
        assert_eq!(enc.layout.columns[2].category.as_deref(), Some("red"));
        let x: Vec<f64> = (0..3).map(|i| enc.values.get(i, 0)).collect();
        let mean = x.iter().sum::<f64>() / 3.0;
        let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / 3.0;
        assert!(mean.abs() < 1e-9 && (var - 1.0).abs() < 1e-9);
        assert_eq!(enc.values.row(0)[1..3], [0.0, 1.0]);
        // constant column encodes as zero
        assert!(enc.values.column(3).iter().all(|&v| v == 0.0));
        // unseen category: all-zero block
        assert_eq!(enc.values.row(3)[1..3], [0.0, 0.0]);
        assert_eq!(enc.unseen_categories, 1);
    }

    #[test]
    fn decode_inverts_encode() {
        let ds = mixed_dataset();
        let enc = encode(&ds, &[0, 1, 2, 3]).unwrap();
        for (raw, decoded) in ds.rows().iter().zip(enc.decode()) {
            for (a, b) in raw.iter().zip(decoded) {
                match (a, b.unwrap()) {
                    (RawValue::Numeric(x), RawValue::Numeric(y)) => assert!((x - y).abs() < 1e-9),
                    (a, b) => assert_eq!(a, &b),
                }
            }
        }
    }

    #[test]
    fn split_preserves_order() {
        let m = Matrix::from_rows(&[[0.0], [1.0], [2.0]]).unwrap();
        let s = split_by_sensitive(&m, &[0, 1, 0]).unwrap();
        assert_eq!(s.index_a0, vec![0, 2]);
        assert_eq!(s.index_a1, vec![1]);
        assert_eq!(s.group_a0.column(0), vec![0.0, 2.0]);
        assert_eq!(s.merge(&s.group_a0, &s.group_a1).unwrap(), m);
        assert!(split_by_sensitive(&m, &[1, 1, 1]).is_err());
    }

    #[test]
    fn ten_rows_five_folds() {
        let labels = [0, 1, 0, 1, 0, 1, 0, 1, 0, 1];
        let sensitive = [0, 0, 1, 1, 0, 0, 1, 1, 0, 1];
        let plan = stratified_kfold(&labels, &sensitive, 5, 3).unwrap();
        assert_eq!(plan.stratification, Stratification::LabelOnly);
        let mut all: Vec<usize> = plan.folds.iter().flat_map(|f| f.test.clone()).collect();
        assert!(plan.folds.iter().all(|f| f.test.len() == 2 && f.train.len() == 8));
        all.sort_unstable();
        assert_eq!(all, (0..10).collect::<Vec<_>>());
        assert_eq!(plan, stratified_kfold(&labels, &sensitive, 5, 3).unwrap());
        assert!(stratified_kfold(&labels, &sensitive, 1, 3).is_err());
        assert!(stratified_kfold(&labels, &sensitive, 11, 3).is_err());
    }
}
