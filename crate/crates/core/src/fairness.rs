//! Individual and group fairness metrics, data fidelity, adjustment rates, and
//! the discrete total-variation estimate.
//!
//! Group rates are formed from integer counts and divided once, so two
//! metrics built from the same counts compare exactly.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec::Vec;

use crate::dataset::PlayerMap;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::model::{predict_label, Predictor, DEFAULT_THRESHOLD};

/// Scale on which discriminative risk is measured.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case", tag = "scale"))]
pub enum DrScale {
    #[default]
    Probability,
    /// Hard labels at the given threshold; DR is then 0 or 1 per row.
    Label { threshold: f64 },
}

/// `|f(x, A=0) - f(x, A=1)|`.
pub fn dr_instance<P: Predictor + ?Sized>(predictor: &P, features: &[f64], scale: DrScale) -> f64 {
    match scale {
        DrScale::Probability => {
            (predictor.predict_proba(features, 0) - predictor.predict_proba(features, 1)).abs()
        }
        DrScale::Label { threshold } => {
            let a = predict_label(predictor, features, 0, threshold);
            let b = predict_label(predictor, features, 1, threshold);
            (a != b) as u8 as f64
        }
    }
}

/// Mean individual DR over the rows of `x`.
pub fn dr_dataset<P: Predictor + ?Sized>(predictor: &P, x: &Matrix, scale: DrScale) -> Result<f64> {
    if x.rows() == 0 {
        return Err(Error::Dataset("DR over an empty set".into()));
    }
    let total: f64 = x.iter_rows().map(|r| dr_instance(predictor, r, scale)).sum();
    Ok(total / x.rows() as f64)
}

fn check_lengths(x: &Matrix, sensitive: &[u8], labels: Option<&[u8]>) -> Result<()> {
    if sensitive.len() != x.rows() || labels.is_some_and(|y| y.len() != x.rows()) {
        return Err(Error::Dimension("rows, sensitive values and labels differ in length".into()));
    }
    Ok(())
}

/// Hard predictions, each row evaluated with its own sensitive value.
pub fn predict_labels<P: Predictor + ?Sized>(predictor: &P, x: &Matrix, sensitive: &[u8]) -> Vec<u8> {
    x.iter_rows()
        .zip(sensitive)
        .map(|(r, &a)| predict_label(predictor, r, a, DEFAULT_THRESHOLD))
        .collect()
}

/// `|p/q - r/s|` evaluated as a single rounded division.
fn rate_gap(p: usize, q: usize, r: usize, s: usize) -> f64 {
    let lhs = p as i128 * s as i128;
    let rhs = r as i128 * q as i128;
    (lhs - rhs).unsigned_abs() as f64 / (q as i128 * s as i128) as f64
}

/// Per-group confusion counts from hard predictions.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GroupCounts {
    pub rows: usize,
    pub predicted_positive: usize,
    pub actual_positive: usize,
    pub true_positive: usize,
}

pub fn group_counts(predictions: &[u8], sensitive: &[u8], labels: Option<&[u8]>) -> [GroupCounts; 2] {
    let mut out = [GroupCounts::default(); 2];
    for (i, (&p, &a)) in predictions.iter().zip(sensitive).enumerate() {
        let c = &mut out[a as usize];
        c.rows += 1;
        c.predicted_positive += p as usize;
        if let Some(y) = labels {
            c.actual_positive += y[i] as usize;
            c.true_positive += (p == 1 && y[i] == 1) as usize;
        }
    }
    out
}

pub fn demographic_parity_from_counts(c: &[GroupCounts; 2]) -> Result<f64> {
    if c[0].rows == 0 || c[1].rows == 0 {
        return Err(Error::UndefinedMetric("demographic parity needs both groups".into()));
    }
    Ok(rate_gap(c[0].predicted_positive, c[0].rows, c[1].predicted_positive, c[1].rows))
}

pub fn equality_of_opportunity_from_counts(c: &[GroupCounts; 2]) -> Result<f64> {
    for (a, g) in c.iter().enumerate() {
        if g.actual_positive == 0 {
            return Err(Error::UndefinedMetric(format!(
                "equality of opportunity: group A={a} has no positive labels"
            )));
        }
    }
    Ok(rate_gap(c[0].true_positive, c[0].actual_positive, c[1].true_positive, c[1].actual_positive))
}

pub fn predictive_quality_parity_from_counts(c: &[GroupCounts; 2]) -> Result<f64> {
    for (a, g) in c.iter().enumerate() {
        if g.predicted_positive == 0 {
            return Err(Error::UndefinedMetric(format!(
                "predictive quality parity: group A={a} has no predicted positives"
            )));
        }
    }
    Ok(rate_gap(
        c[0].true_positive,
        c[0].predicted_positive,
        c[1].true_positive,
        c[1].predicted_positive,
    ))
}

/// Gap in positive-prediction rates between the sensitive groups.
pub fn demographic_parity<P: Predictor + ?Sized>(predictor: &P, x: &Matrix, sensitive: &[u8]) -> Result<f64> {
    check_lengths(x, sensitive, None)?;
    let preds = predict_labels(predictor, x, sensitive);
    demographic_parity_from_counts(&group_counts(&preds, sensitive, None))
}

/// Gap in true-positive rates.
pub fn equality_of_opportunity<P: Predictor + ?Sized>(
    predictor: &P,
    x: &Matrix,
    sensitive: &[u8],
    labels: &[u8],
) -> Result<f64> {
    check_lengths(x, sensitive, Some(labels))?;
    let preds = predict_labels(predictor, x, sensitive);
    equality_of_opportunity_from_counts(&group_counts(&preds, sensitive, Some(labels)))
}

/// Gap in precision.
pub fn predictive_quality_parity<P: Predictor + ?Sized>(
    predictor: &P,
    x: &Matrix,
    sensitive: &[u8],
    labels: &[u8],
) -> Result<f64> {
    check_lengths(x, sensitive, Some(labels))?;
    let preds = predict_labels(predictor, x, sensitive);
    predictive_quality_parity_from_counts(&group_counts(&preds, sensitive, Some(labels)))
}

pub fn accuracy<P: Predictor + ?Sized>(
    predictor: &P,
    x: &Matrix,
    sensitive: &[u8],
    labels: &[u8],
) -> Result<f64> {
    check_lengths(x, sensitive, Some(labels))?;
    if x.rows() == 0 {
        return Err(Error::Dataset("accuracy over an empty set".into()));
    }
    let preds = predict_labels(predictor, x, sensitive);
    let hits = preds.iter().zip(labels).filter(|(p, y)| p == y).count();
    Ok(hits as f64 / x.rows() as f64)
}

/// Exact order-1 Wasserstein distance between two empirical distributions on
/// the line, computed as the integral of `|F_a - F_b|`.
pub fn wasserstein_1d(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Dataset("wasserstein distance needs non-empty samples".into()));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("wasserstein samples".into()));
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut total = 0.0;
    let mut x = a[0].min(b[0]);
    while i < a.len() || j < b.len() {
        let next = match (a.get(i), b.get(j)) {
            (Some(&u), Some(&v)) => u.min(v),
            (Some(&u), None) => u,
            (None, Some(&v)) => v,
            (None, None) => unreachable!(),
        };
        total += (i as f64 / na - j as f64 / nb).abs() * (next - x);
        x = next;
        while i < a.len() && a[i] == x {
            i += 1;
        }
        while j < b.len() && b[j] == x {
            j += 1;
        }
    }
    Ok(total)
}

/// Mean over columns of the 1-D Wasserstein distance between original and
/// modified column samples.
pub fn data_fidelity(original: &Matrix, modified: &Matrix) -> Result<f64> {
    if !original.same_shape(modified) {
        return Err(Error::Dimension("original and modified shapes differ".into()));
    }
    if original.cols() == 0 {
        return Err(Error::Dimension("no columns".into()));
    }
    let mut total = 0.0;
    for j in 0..original.cols() {
        total += wasserstein_1d(&original.column(j), &modified.column(j))?;
    }
    Ok(total / original.cols() as f64)
}

/// Raw-feature cells whose encoded block differs after modification.
pub fn changed_cells(original: &Matrix, modified: &Matrix, players: &PlayerMap) -> Result<usize> {
    if !original.same_shape(modified) || players.columns() != original.cols() {
        return Err(Error::Dimension("original, modified and player map disagree".into()));
    }
    let mut changed = 0;
    for i in 0..original.rows() {
        let (o, m) = (original.row(i), modified.row(i));
        for r in players.ranges() {
            if o[r.clone()] != m[r.clone()] {
                changed += 1;
            }
        }
    }
    Ok(changed)
}

/// Fraction of raw-feature cells changed; a one-hot block counts once.
pub fn training_adjustment_rate(original: &Matrix, modified: &Matrix, players: &PlayerMap) -> Result<f64> {
    let changed = changed_cells(original, modified, players)?;
    let cells = original.rows() * players.len();
    if cells == 0 {
        return Err(Error::Dimension("no cells".into()));
    }
    Ok(changed as f64 / cells as f64)
}

/// How one column is discretised for the total-variation histogram.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ColumnBinning {
    /// Each distinct value is its own cell (categoricals, one-hot columns).
    Exact,
    /// `floor((v - origin) / width)`.
    FixedWidth { origin: f64, width: f64 },
}

fn bin_key(v: f64, binning: ColumnBinning) -> i64 {
    match binning {
        ColumnBinning::Exact => (v + 0.0).to_bits() as i64,
        ColumnBinning::FixedWidth { origin, width } => libm::floor((v - origin) / width) as i64,
    }
}

/// Joint-histogram counts `(count_0, count_1)` per occupied cell.
pub fn joint_histogram(
    d0: &Matrix,
    d1: &Matrix,
    binning: &[ColumnBinning],
) -> Result<BTreeMap<Vec<i64>, (usize, usize)>> {
    if d0.cols() != d1.cols() || binning.len() != d0.cols() {
        return Err(Error::Dimension("binning must cover every column of both samples".into()));
    }
    if d0.rows() == 0 || d1.rows() == 0 {
        return Err(Error::Dataset("total variation needs non-empty samples".into()));
    }
    if let Some(ColumnBinning::FixedWidth { width, .. }) = binning
        .iter()
        .find(|b| matches!(b, ColumnBinning::FixedWidth { width, .. } if !(*width > 0.0)))
    {
        return Err(Error::InvalidParameter(format!("bin width {width} must be positive")));
    }
    let key = |row: &[f64]| -> Vec<i64> { row.iter().zip(binning).map(|(&v, &b)| bin_key(v, b)).collect() };
    let mut cells: BTreeMap<Vec<i64>, (usize, usize)> = BTreeMap::new();
    for r in d0.iter_rows() {
        cells.entry(key(r)).or_default().0 += 1;
    }
    for r in d1.iter_rows() {
        cells.entry(key(r)).or_default().1 += 1;
    }
    Ok(cells)
}

/// Half the L1 distance between the two empirical joint histograms.
pub fn tv_distance_discrete(d0: &Matrix, d1: &Matrix, binning: &[ColumnBinning]) -> Result<f64> {
    let cells = joint_histogram(d0, d1, binning)?;
    let (n0, n1) = (d0.rows() as i128, d1.rows() as i128);
    // common denominator n0 * n1, halved at the end
    let numerator: u128 = cells
        .values()
        .map(|&(c0, c1)| (c0 as i128 * n1 - c1 as i128 * n0).unsigned_abs())
        .sum();
    Ok(numerator as f64 / (2 * n0 * n1) as f64)
}

/// Evaluation summary for one method on one fold.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FairnessReport {
    pub accuracy: f64,
    /// Mean DR on the evaluation rows.
    pub dr: f64,
    pub dp: f64,
    pub eo: Option<f64>,
    /// `None` when a group has no predicted positives.
    pub pqp: Option<f64>,
    /// Mean DR of the same predictor on the training rows, in the form it
    /// receives them at inference.
    pub dr_train: Option<f64>,
    pub data_fidelity: Option<f64>,
    pub training_adjustment_rate: Option<f64>,
    pub test_adjustment_necessity: bool,
    pub epsilon: Option<f64>,
}

impl FairnessReport {
    /// Pass/fail per group metric against `epsilon`, when set.
    pub fn within_epsilon(&self) -> Option<[bool; 4]> {
        let eps = self.epsilon?;
        let ok = |v: Option<f64>| v.is_some_and(|v| v <= eps);
        Some([self.dr <= eps, self.dp <= eps, ok(self.eo), ok(self.pqp)])
    }
}

/// Accuracy, DR, DP, EO and PQP of `predictor` on labelled rows.
pub fn evaluate<P: Predictor + ?Sized>(
    predictor: &P,
    x: &Matrix,
    sensitive: &[u8],
    labels: &[u8],
    scale: DrScale,
) -> Result<FairnessReport> {
    check_lengths(x, sensitive, Some(labels))?;
    let preds = predict_labels(predictor, x, sensitive);
    let counts = group_counts(&preds, sensitive, Some(labels));
    let hits = preds.iter().zip(labels).filter(|(p, y)| p == y).count();
    if x.rows() == 0 {
        return Err(Error::Dataset("evaluation set is empty".into()));
    }
    Ok(FairnessReport {
        accuracy: hits as f64 / x.rows() as f64,
        dr: dr_dataset(predictor, x, scale)?,
        dp: demographic_parity_from_counts(&counts)?,
        eo: equality_of_opportunity_from_counts(&counts).ok(),
        pqp: predictive_quality_parity_from_counts(&counts).ok(),
        dr_train: None,
        data_fidelity: None,
        training_adjustment_rate: None,
        test_adjustment_necessity: false,
        epsilon: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn dr_of_sensitive_blind_and_shifted_models() {
        let blind = |x: &[f64], _: u8| x[0].clamp(0.0, 1.0);
        assert_eq!(dr_instance(&blind, &[0.3], DrScale::Probability), 0.0);
        let shifted = |_: &[f64], a: u8| 0.2 + 0.5 * a as f64;
        assert!((dr_instance(&shifted, &[0.0], DrScale::Probability) - 0.5).abs() < 1e-15);
        let x = Matrix::from_rows(&[[0.1], [0.1], [0.1]]).unwrap();
        assert!((dr_dataset(&shifted, &x, DrScale::Probability).unwrap() - 0.5).abs() < 1e-15);
        assert!(dr_dataset(&shifted, &Matrix::zeros(0, 1), DrScale::Probability).is_err());
    }

    #[test]
    fn group_metric_extremes() {
        let x = Matrix::from_rows(&[[0.0], [0.0], [0.0], [0.0]]).unwrap();
        let a = [0, 0, 1, 1];
        let y = [1, 0, 1, 0];
        let always = |_: &[f64], _: u8| 1.0;
        assert_eq!(demographic_parity(&always, &x, &a).unwrap(), 0.0);
        let by_group = |_: &[f64], s: u8| if s == 0 { 1.0 } else { 0.0 };
        assert_eq!(demographic_parity(&by_group, &x, &a).unwrap(), 1.0);
        assert!(predictive_quality_parity(&by_group, &x, &a, &y).is_err());
        assert!(demographic_parity(&always, &x, &[0, 0, 0, 0]).is_err());
    }

    #[test]
    fn forced_rates() {
        // group 0: 5 positives, 4 predicted positive (TPR 0.8)
        // group 1: 4 positives, 2 predicted positive (TPR 0.5)
        let mut preds = vec![];
        let mut a = vec![];
        let mut y = vec![];
        for (p, t) in [(1, 1), (1, 1), (1, 1), (1, 1), (0, 1)] {
            preds.push(p);
            y.push(t);
            a.push(0);
        }
        for (p, t) in [(1, 1), (1, 1), (0, 1), (0, 1), (1, 0), (1, 0)] {
            preds.push(p);
            y.push(t);
            a.push(1);
        }
        let c = group_counts(&preds, &a, Some(&y));
        assert!((equality_of_opportunity_from_counts(&c).unwrap() - 0.3).abs() < 1e-15);
        // precision 1.0 vs 0.5
        assert!((predictive_quality_parity_from_counts(&c).unwrap() - 0.5).abs() < 1e-15);
        let no_pos = group_counts(&[0, 0], &[0, 1], Some(&[0, 1]));
        let err = equality_of_opportunity_from_counts(&no_pos).unwrap_err();
        assert!(matches!(err, Error::UndefinedMetric(ref m) if m.contains("A=0")));
    }

    #[test]
    fn accuracy_extremes() {
        let x = Matrix::from_rows(&[[0.0], [0.0]]).unwrap();
        let yes = |_: &[f64], _: u8| 0.9;
        assert_eq!(accuracy(&yes, &x, &[0, 1], &[1, 1]).unwrap(), 1.0);
        assert_eq!(accuracy(&yes, &x, &[0, 1], &[0, 0]).unwrap(), 0.0);
    }

    #[test]
    fn wasserstein_basics() {
        let a = [0.5, -1.0, 2.0, 3.5];
        assert_eq!(wasserstein_1d(&a, &a).unwrap(), 0.0);
        let shifted: Vec<f64> = a.iter().map(|v| v - 1.25).collect();
        assert!((wasserstein_1d(&a, &shifted).unwrap() - 1.25).abs() < 1e-12);
        assert!(wasserstein_1d(&[], &a).is_err());
    }

    #[test]
    fn fidelity_and_adjustment_rate() {
        let x = Matrix::from_rows(&[[0.0, 1.0, 0.0, 2.0], [1.0, 0.0, 1.0, 3.0]]).unwrap();
        assert_eq!(data_fidelity(&x, &x).unwrap(), 0.0);
        let mut shifted = x.clone();
        for i in 0..2 {
            shifted.set(i, 3, x.get(i, 3) + 1.0);
        }
        assert!((data_fidelity(&x, &shifted).unwrap() - 0.25).abs() < 1e-15);

        // players: numeric, one-hot pair, numeric
        let players = PlayerMap::new(vec![0..1, 1..3, 3..4]).unwrap();
        assert_eq!(training_adjustment_rate(&x, &x, &players).unwrap(), 0.0);
        let mut one = x.clone();
        one.set(0, 1, 0.0);
        one.set(0, 2, 1.0);
        assert!((training_adjustment_rate(&x, &one, &players).unwrap() - 1.0 / 6.0).abs() < 1e-15);
        let mut all = x.clone();
        for i in 0..2 {
            for j in 0..4 {
                all.set(i, j, x.get(i, j) + 7.0);
            }
        }
        assert_eq!(training_adjustment_rate(&x, &all, &players).unwrap(), 1.0);
    }

    #[test]
    fn single_cell_of_fifty() {
        let x = Matrix::zeros(10, 5);
        let mut m = x.clone();
        m.set(4, 2, 1.0);
        let players = PlayerMap::singletons(5);
        assert!((training_adjustment_rate(&x, &m, &players).unwrap() - 0.02).abs() < 1e-15);
    }

    #[test]
    fn total_variation_cases() {
        let exact = [ColumnBinning::Exact];
        let d = Matrix::from_rows(&[[0.0], [1.0], [1.0]]).unwrap();
        assert_eq!(tv_distance_discrete(&d, &d, &exact).unwrap(), 0.0);
        let e = Matrix::from_rows(&[[5.0], [6.0]]).unwrap();
        assert_eq!(tv_distance_discrete(&d, &e, &exact).unwrap(), 1.0);
        // counts (2,1,1) over 4 vs (1,1,2) over 4 -> 0.5 * (1/4 + 0 + 1/4) = 0.25
        let p = Matrix::from_rows(&[[0.0], [0.0], [1.0], [2.0]]).unwrap();
        let q = Matrix::from_rows(&[[0.0], [1.0], [2.0], [2.0]]).unwrap();
        assert!((tv_distance_discrete(&p, &q, &exact).unwrap() - 0.25).abs() < 1e-15);
        let bins = [ColumnBinning::FixedWidth { origin: 0.0, width: 10.0 }];
        assert_eq!(tv_distance_discrete(&d, &e, &bins).unwrap(), 0.0);
    }
}
