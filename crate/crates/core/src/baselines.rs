//! Comparison preprocessors: linear correlation removal, quantile-based
//! disparate impact repair, and two random-replacement ablations.

use alloc::format;
use alloc::vec::Vec;

use rand::Rng as _;

use crate::dataset::{split_by_sensitive, PlayerMap};
use crate::error::{Error, Result};
use crate::fairness::changed_cells;
use crate::matching::{build_reference, nearest_neighbor_match};
use crate::matrix::Matrix;
use crate::model::Predictor;
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum BaselineMethod {
    None,
    CorrelationRemover,
    DisparateImpactRemover,
    AblationRandom,
    AblationMatchRandom,
}

impl BaselineMethod {
    /// Whether the fitted transform must also be applied to test rows.
    pub fn test_adjustment_necessity(self) -> bool {
        matches!(self, BaselineMethod::CorrelationRemover | BaselineMethod::DisparateImpactRemover)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BaselineConfig {
    pub method: BaselineMethod,
    /// Correlation remover strength.
    pub alpha: f64,
    /// Disparate impact repair level.
    pub repair_level: f64,
    /// Ablation draws; `None` takes the paired FairSHAP log length.
    pub n_modifications: Option<usize>,
    pub seed: u64,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self {
            method: BaselineMethod::None,
            alpha: 1.0,
            repair_level: 1.0,
            n_modifications: None,
            seed: 0,
        }
    }
}

impl BaselineConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("alpha", self.alpha), ("repair_level", self.repair_level)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidParameter(format!("{name} must lie in [0, 1], got {v}")));
            }
        }
        Ok(())
    }
}

fn check_sensitive(x: &Matrix, sensitive: &[u8]) -> Result<[usize; 2]> {
    if sensitive.len() != x.rows() {
        return Err(Error::Dimension("rows and sensitive values differ in length".into()));
    }
    let mut counts = [0, 0];
    for &a in sensitive {
        if a > 1 {
            return Err(Error::InvalidParameter(format!("sensitive value {a} is not binary")));
        }
        counts[a as usize] += 1;
    }
    if counts.contains(&0) {
        return Err(Error::Dataset("both sensitive groups must be present".into()));
    }
    Ok(counts)
}

/// `x_j' = x_j - alpha * beta_j * (a - mean(a))` with `beta_j` the
/// least-squares slope of column `j` on `a`, fitted once on training rows.
///
/// With `drop_sensitive` the sensitive attribute is removed from the model
/// input as well: downstream models are trained and queried through
/// [`SensitiveBlind`].
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CorrelationRemover {
    pub alpha: f64,
    pub sensitive_mean: f64,
    pub coefficients: Vec<f64>,
    pub drop_sensitive: bool,
}

/// Queries the wrapped predictor with the sensitive input pinned to 0.
#[derive(Debug, Clone, Copy)]
pub struct SensitiveBlind<P>(pub P);

impl<P: Predictor> Predictor for SensitiveBlind<P> {
    fn predict_proba(&self, features: &[f64], _sensitive: u8) -> f64 {
        self.0.predict_proba(features, 0)
    }
}

impl CorrelationRemover {
    pub fn fit(x: &Matrix, sensitive: &[u8], alpha: f64) -> Result<Self> {
        let counts = check_sensitive(x, sensitive)?;
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::InvalidParameter(format!("alpha must lie in [0, 1], got {alpha}")));
        }
        let n = x.rows() as f64;
        let sensitive_mean = counts[1] as f64 / n;
        let var_a: f64 = sensitive
            .iter()
            .map(|&a| (a as f64 - sensitive_mean) * (a as f64 - sensitive_mean))
            .sum();
        let means: Vec<f64> = x.col_sums().iter().map(|s| s / n).collect();
        let mut cov = alloc::vec![0.0; x.cols()];
        for (row, &a) in x.iter_rows().zip(sensitive) {
            let da = a as f64 - sensitive_mean;
            for (c, (v, m)) in cov.iter_mut().zip(row.iter().zip(&means)) {
                *c += da * (v - m);
            }
        }
        Ok(Self {
            alpha,
            sensitive_mean,
            coefficients: cov.iter().map(|c| c / var_a).collect(),
            drop_sensitive: true,
        })
    }

    pub fn transform(&self, x: &Matrix, sensitive: &[u8]) -> Result<Matrix> {
        if x.cols() != self.coefficients.len() || sensitive.len() != x.rows() {
            return Err(Error::Dimension("input does not match the fitted remover".into()));
        }
        let mut out = x.clone();
        for (i, &a) in sensitive.iter().enumerate() {
            let da = self.alpha * (a as f64 - self.sensitive_mean);
            for (v, b) in out.row_mut(i).iter_mut().zip(&self.coefficients) {
                *v -= b * da;
            }
        }
        Ok(out)
    }
}

/// Per-column quantile repair toward the median of the group quantile
/// functions. Columns not listed pass through.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DisparateImpactRemover {
    pub repair_level: f64,
    pub columns: Vec<usize>,
    /// `sorted[c][g]`: training values of `columns[c]` in group `g`, ascending.
    pub sorted: Vec<[Vec<f64>; 2]>,
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    let idx = libm::floor(q * n as f64) as usize;
    sorted[idx.min(n - 1)]
}

/// Mid-rank position of `v` in `sorted`, in `(0, 1)`.
fn mid_rank(sorted: &[f64], v: f64) -> f64 {
    let less = sorted.partition_point(|&s| s < v);
    let leq = sorted.partition_point(|&s| s <= v);
    (less + leq) as f64 / (2 * sorted.len()) as f64
}

impl DisparateImpactRemover {
    pub fn fit(x: &Matrix, sensitive: &[u8], columns: &[usize], repair_level: f64) -> Result<Self> {
        check_sensitive(x, sensitive)?;
        if !(0.0..=1.0).contains(&repair_level) {
            return Err(Error::InvalidParameter(format!(
                "repair_level must lie in [0, 1], got {repair_level}"
            )));
        }
        if let Some(&c) = columns.iter().find(|&&c| c >= x.cols()) {
            return Err(Error::Dimension(format!("column {c} out of range")));
        }
        let sorted = columns
            .iter()
            .map(|&c| {
                let mut groups = [Vec::new(), Vec::new()];
                for (row, &a) in x.iter_rows().zip(sensitive) {
                    groups[a as usize].push(row[c]);
                }
                for g in &mut groups {
                    g.sort_by(f64::total_cmp);
                }
                groups
            })
            .collect();
        Ok(Self {
            repair_level,
            columns: columns.to_vec(),
            sorted,
        })
    }

    /// Repaired value of `v` observed in group `group` of column slot `c`.
    pub fn repair_value(&self, c: usize, group: u8, v: f64) -> f64 {
        let groups = &self.sorted[c];
        let q = mid_rank(&groups[group as usize], v);
        let mut targets = [quantile(&groups[0], q), quantile(&groups[1], q)];
        targets.sort_by(f64::total_cmp);
        let target = 0.5 * (targets[0] + targets[1]);
        (1.0 - self.repair_level) * v + self.repair_level * target
    }

    pub fn transform(&self, x: &Matrix, sensitive: &[u8]) -> Result<Matrix> {
        if sensitive.len() != x.rows() || self.columns.iter().any(|&c| c >= x.cols()) {
            return Err(Error::Dimension("input does not match the fitted remover".into()));
        }
        let mut out = x.clone();
        if self.repair_level == 0.0 {
            return Ok(out);
        }
        for (i, &a) in sensitive.iter().enumerate() {
            let row = out.row_mut(i);
            for (slot, &c) in self.columns.iter().enumerate() {
                row[c] = self.repair_value(slot, a, row[c]);
            }
        }
        Ok(out)
    }
}

/// Output of an ablation.
#[derive(Debug, Clone, PartialEq)]
pub struct Ablation {
    pub data: Matrix,
    pub attempted: usize,
    /// Raw cells that differ from the input afterwards.
    pub effective: usize,
}

/// Replaces `n` uniformly drawn (row, raw feature) cells with the same
/// feature of another uniformly drawn row.
pub fn ablation_random(x: &Matrix, players: &PlayerMap, n: usize, seed: u64) -> Result<Ablation> {
    if players.columns() != x.cols() {
        return Err(Error::Dimension("player map does not match the data".into()));
    }
    if n > 0 && x.rows() < 2 {
        return Err(Error::Dataset("random replacement needs at least two rows".into()));
    }
    let mut r = rng::seeded(seed);
    let mut data = x.clone();
    for _ in 0..n {
        let i = r.random_range(0..x.rows());
        let k = r.random_range(0..players.len());
        let mut j = r.random_range(0..x.rows() - 1);
        if j >= i {
            j += 1;
        }
        let cols = players.range(k);
        let value = data.row(j)[cols.clone()].to_vec();
        data.row_mut(i)[cols].copy_from_slice(&value);
    }
    let effective = changed_cells(x, &data, players)?;
    Ok(Ablation {
        data,
        attempted: n,
        effective,
    })
}

/// Nearest-neighbour counterpart of every row in the other sensitive group,
/// as dataset row indices.
pub fn nearest_references(x: &Matrix, sensitive: &[u8]) -> Result<Vec<usize>> {
    let split = split_by_sensitive(x, sensitive)?;
    let mut source = alloc::vec![0; x.rows()];
    for a in 0..2u8 {
        let other = split.group(1 - a);
        let plan = nearest_neighbor_match(split.group(a), other)?;
        let reference = build_reference(&plan, other)?;
        for (local, &j) in reference.source.iter().enumerate() {
            source[split.indices(a)[local]] = split.indices(1 - a)[j];
        }
    }
    Ok(source)
}

/// Replaces `n` uniformly drawn (row, raw feature) cells with the value of the
/// row's nearest-neighbour counterpart, with no attribution step.
pub fn ablation_match_random(
    x: &Matrix,
    sensitive: &[u8],
    players: &PlayerMap,
    n: usize,
    seed: u64,
) -> Result<Ablation> {
    if players.columns() != x.cols() {
        return Err(Error::Dimension("player map does not match the data".into()));
    }
    let source = nearest_references(x, sensitive)?;
    let mut r = rng::seeded(seed);
    let mut data = x.clone();
    for _ in 0..n {
        let i = r.random_range(0..x.rows());
        let k = r.random_range(0..players.len());
        let cols = players.range(k);
        data.row_mut(i)[cols.clone()].copy_from_slice(&x.row(source[i])[cols]);
    }
    let effective = changed_cells(x, &data, players)?;
    Ok(Ablation {
        data,
        attempted: n,
        effective,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn correlation_remover_cases() {
        let a = [0u8, 1, 0, 1];
        // column 0 uncorrelated with a, column 1 equals a
        let x = Matrix::from_rows(&[[1.0, 0.0], [1.0, 1.0], [2.0, 0.0], [2.0, 1.0]]).unwrap();
        let cr = CorrelationRemover::fit(&x, &a, 1.0).unwrap();
        assert_eq!(cr.coefficients[0], 0.0);
        let out = cr.transform(&x, &a).unwrap();
        assert_eq!(out.column(0), x.column(0));
        assert!(out.column(1).iter().all(|&v| (v - 0.5).abs() < 1e-15));
        assert!(CorrelationRemover::fit(&x, &[0, 0, 0, 0], 1.0).is_err());
    }

    #[test]
    fn dir_level_zero_and_identical_groups() {
        let a = [0u8, 0, 0, 1, 1, 1];
        let x = Matrix::from_rows(&[[1.0], [2.0], [3.0], [3.0], [1.0], [2.0]]).unwrap();
        let dir = DisparateImpactRemover::fit(&x, &a, &[0], 1.0).unwrap();
        assert_eq!(dir.transform(&x, &a).unwrap(), x);
        let y = Matrix::from_rows(&[[1.0], [2.0], [3.0], [10.0], [20.0], [30.0]]).unwrap();
        let zero = DisparateImpactRemover::fit(&y, &a, &[0], 0.0).unwrap();
        assert_eq!(zero.transform(&y, &a).unwrap(), y);
        let full = DisparateImpactRemover::fit(&y, &a, &[0], 1.0).unwrap();
        assert_eq!(full.transform(&y, &a).unwrap().column(0), vec![5.5, 11.0, 16.5, 5.5, 11.0, 16.5]);
    }

    #[test]
    fn ablations_noop_cases() {
        let x = Matrix::from_rows(&[[1.0, 0.0], [2.0, 1.0], [3.0, 0.0]]).unwrap();
        let players = PlayerMap::singletons(2);
        assert_eq!(ablation_random(&x, &players, 0, 1).unwrap().data, x);
        let constant = Matrix::from_rows(&[[4.0], [4.0], [4.0]]).unwrap();
        let out = ablation_random(&constant, &PlayerMap::singletons(1), 50, 3).unwrap();
        assert_eq!(out.data, constant);
        assert_eq!(out.effective, 0);
        let a = [0u8, 1, 0];
        let m = ablation_match_random(&x, &a, &players, 0, 1).unwrap();
        assert_eq!(m.data, x);
    }

    #[test]
    fn match_ablation_copies_neighbours() {
        let x = Matrix::from_rows(&[[0.0, 0.0], [0.1, 0.2], [5.0, 5.0], [5.2, 4.9]]).unwrap();
        let a = [0u8, 1, 0, 1];
        let source = nearest_references(&x, &a).unwrap();
        assert_eq!(source, vec![1, 0, 3, 2]);
        let players = PlayerMap::singletons(2);
        let out = ablation_match_random(&x, &a, &players, 20, 7).unwrap();
        for i in 0..4 {
            for k in 0..2 {
                let v = out.data.get(i, k);
                assert!(v == x.get(i, k) || v == x.get(source[i], k));
            }
        }
        assert!(out.effective <= 20);
    }
}
