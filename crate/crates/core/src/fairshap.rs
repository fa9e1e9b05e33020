//! FairSHAP: match each sensitive group against the other, attribute the
//! per-row discriminative risk to raw features with the DR game, and replace
//! the cells whose attribution meets the threshold with the matched
//! counterpart's value.

use alloc::format;
use alloc::vec::Vec;
use core::cmp::Ordering;

use crate::dataset::{split_by_sensitive, PlayerMap};
use crate::error::{Error, Result};
use crate::fairness::{
    data_fidelity, dr_dataset, dr_instance, evaluate, training_adjustment_rate, DrScale, FairnessReport,
};
use crate::matching::{
    build_reference, nearest_neighbor_match, sinkhorn_ot_match, MatchMethod, MatchingPlan, ReferenceSet,
    SinkhornParams,
};
use crate::matrix::Matrix;
use crate::model::{train, Predictor, TrainConfig};
use crate::shapley::{compose, shapley_matrix, EstimatorConfig, EstimatorMode, ShapleyAttribution};

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case", tag = "method"))]
pub enum Matcher {
    NearestNeighbour,
    OptimalTransport(SinkhornParams),
}

impl Matcher {
    pub fn method(&self) -> MatchMethod {
        match self {
            Matcher::NearestNeighbour => MatchMethod::NearestNeighbour,
            Matcher::OptimalTransport(_) => MatchMethod::OptimalTransport,
        }
    }

    pub fn plan(&self, target: &Matrix, other: &Matrix) -> Result<MatchingPlan> {
        match self {
            Matcher::NearestNeighbour => nearest_neighbor_match(target, other),
            Matcher::OptimalTransport(params) => sinkhorn_ot_match(target, other, params),
        }
    }
}

/// Which attributions select a cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum ThresholdMode {
    /// `phi >= T`: only features that raise DR.
    #[default]
    Signed,
    /// `|phi| >= T`.
    Absolute,
}

impl ThresholdMode {
    pub fn selects(self, phi: f64, threshold: f64) -> bool {
        match self {
            ThresholdMode::Signed => phi >= threshold,
            ThresholdMode::Absolute => phi.abs() >= threshold,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FairshapConfig {
    pub threshold: f64,
    pub threshold_mode: ThresholdMode,
    pub matcher: Matcher,
    pub estimator: EstimatorConfig,
    pub scale: DrScale,
}

impl Default for FairshapConfig {
    fn default() -> Self {
        Self {
            threshold: 0.05,
            threshold_mode: ThresholdMode::Signed,
            matcher: Matcher::NearestNeighbour,
            estimator: EstimatorConfig::default(),
            scale: DrScale::Probability,
        }
    }
}

impl FairshapConfig {
    pub fn validate(&self) -> Result<()> {
        if self.threshold.is_nan() || self.threshold == f64::NEG_INFINITY {
            return Err(Error::InvalidParameter(format!(
                "threshold must be a number above -inf, got {}",
                self.threshold
            )));
        }
        if self.estimator.mode != EstimatorMode::Exact && self.estimator.permutations == 0 {
            return Err(Error::InvalidParameter("permutations must be at least 1".into()));
        }
        if let Matcher::OptimalTransport(p) = self.matcher {
            if !(p.epsilon > 0.0 && p.epsilon.is_finite()) || !(p.tol > 0.0) || p.max_iters == 0 {
                return Err(Error::InvalidParameter("invalid Sinkhorn parameters".into()));
            }
        }
        if let DrScale::Label { threshold } = self.scale {
            if !threshold.is_finite() {
                return Err(Error::InvalidParameter("label threshold must be finite".into()));
            }
        }
        Ok(())
    }
}

/// One replaced raw-feature cell.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Modification {
    /// Sensitive value of the modified row.
    pub group: u8,
    /// Row index. Within the group for directional logs, in the dataset for
    /// augmented logs.
    pub row: usize,
    pub feature: usize,
    /// Encoded columns of the feature before and after.
    pub old: Vec<f64>,
    pub new: Vec<f64>,
    pub phi: f64,
    /// Other-group row the new value was copied from.
    pub source: usize,
}

fn by_priority(a: &Modification, b: &Modification) -> Ordering {
    b.phi
        .total_cmp(&a.phi)
        .then(a.group.cmp(&b.group))
        .then(a.row.cmp(&b.row))
        .then(a.feature.cmp(&b.feature))
}

/// Changed cells ordered by descending attribution, ties by (group, row,
/// feature). Cells that met the threshold but already equalled the reference
/// value are counted in `selected` only.
#[derive(Debug, Clone, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ModificationLog {
    pub entries: Vec<Modification>,
    pub selected: usize,
}

impl ModificationLog {
    fn sort(&mut self) {
        self.entries.sort_by(by_priority);
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Changed cells per sensitive group.
    pub fn totals(&self) -> [usize; 2] {
        let mut t = [0, 0];
        for e in &self.entries {
            t[e.group as usize] += 1;
        }
        t
    }

    /// Applies the first `n` entries to `x` (dataset row indices).
    pub fn apply_prefix(&self, x: &Matrix, players: &PlayerMap, n: usize) -> Result<Matrix> {
        if n > self.entries.len() {
            return Err(Error::InvalidParameter(format!(
                "prefix {n} exceeds log length {}",
                self.entries.len()
            )));
        }
        let mut out = x.clone();
        for e in &self.entries[..n] {
            if e.row >= x.rows() || e.feature >= players.len() {
                return Err(Error::Dimension(format!("entry ({}, {}) out of range", e.row, e.feature)));
            }
            out.row_mut(e.row)[players.range(e.feature)].copy_from_slice(&e.new);
        }
        Ok(out)
    }
}

/// Result of modifying one group against the other.
#[derive(Debug, Clone)]
pub struct Directional {
    pub modified: Matrix,
    pub log: ModificationLog,
    pub plan: MatchingPlan,
    pub reference: ReferenceSet,
    pub attribution: ShapleyAttribution,
}

/// Modifies `target` (sensitive value `group`) against `other`.
pub fn fairshap_modify<P: Predictor + ?Sized>(
    target: &Matrix,
    other: &Matrix,
    group: u8,
    predictor: &P,
    players: &PlayerMap,
    cfg: &FairshapConfig,
) -> Result<Directional> {
    cfg.validate()?;
    if target.rows() == 0 || other.rows() == 0 {
        return Err(Error::Dataset("both groups must be non-empty".into()));
    }
    let plan = cfg.matcher.plan(target, other)?;
    let attribution = shapley_matrix(predictor, target, other, &plan, players, &cfg.estimator, cfg.scale)?;
    let reference = build_reference(&plan, other)?;
    let mut modified = target.clone();
    let mut log = ModificationLog::default();
    for i in 0..target.rows() {
        for k in 0..players.len() {
            let phi = attribution.phi.get(i, k);
            if !cfg.threshold_mode.selects(phi, cfg.threshold) {
                continue;
            }
            log.selected += 1;
            let cols = players.range(k);
            let old = &target.row(i)[cols.clone()];
            let new = &reference.rows.row(i)[cols.clone()];
            if old == new {
                continue;
            }
            log.entries.push(Modification {
                group,
                row: i,
                feature: k,
                old: old.to_vec(),
                new: new.to_vec(),
                phi,
                source: reference.source[i],
            });
            modified.row_mut(i)[cols].copy_from_slice(new);
        }
    }
    log.sort();
    Ok(Directional {
        modified,
        log,
        plan,
        reference,
        attribution,
    })
}

/// Both directions, recombined in the original row order.
#[derive(Debug, Clone)]
pub struct Augmented {
    pub data: Matrix,
    /// Combined log with dataset row indices; `source` stays a dataset index.
    pub log: ModificationLog,
    /// Indexed by the sensitive value of the modified group.
    pub directions: [Directional; 2],
    pub index: [Vec<usize>; 2],
}

pub fn fairshap_augment<P: Predictor + ?Sized>(
    x: &Matrix,
    sensitive: &[u8],
    predictor: &P,
    players: &PlayerMap,
    cfg: &FairshapConfig,
) -> Result<Augmented> {
    let split = split_by_sensitive(x, sensitive)?;
    let run = |a: u8| fairshap_modify(split.group(a), split.group(1 - a), a, predictor, players, cfg);
    #[cfg(feature = "std")]
    let (d0, d1) = rayon::join(|| run(0), || run(1));
    #[cfg(not(feature = "std"))]
    let (d0, d1) = (run(0), run(1));
    let (d0, d1) = (d0?, d1?);
    let data = split.merge(&d0.modified, &d1.modified)?;
    let mut log = ModificationLog {
        entries: Vec::with_capacity(d0.log.len() + d1.log.len()),
        selected: d0.log.selected + d1.log.selected,
    };
    for d in [&d0, &d1] {
        for e in &d.log.entries {
            let a = e.group;
            let mut e = e.clone();
            e.row = split.indices(a)[e.row];
            e.source = split.indices(1 - a)[e.source];
            log.entries.push(e);
        }
    }
    log.sort();
    Ok(Augmented {
        data,
        log,
        index: [split.indices(0).to_vec(), split.indices(1).to_vec()],
        directions: [d0, d1],
    })
}

/// `n_points` prefix sizes spread evenly over `[0, total]`, rounded to the
/// nearest count. Short logs repeat sizes so every sweep has `n_points` rows.
pub fn sweep_points(total: usize, n_points: usize) -> Result<Vec<usize>> {
    if n_points < 2 {
        return Err(Error::InvalidParameter("a sweep needs at least 2 points".into()));
    }
    let steps = n_points as u128 - 1;
    Ok((0..n_points)
        .map(|p| ((p as u128 * total as u128 + steps / 2) / steps) as usize)
        .collect())
}

/// Labelled training and evaluation rows for a sweep.
#[derive(Debug, Clone, Copy)]
pub struct FoldData<'a> {
    pub x_train: &'a Matrix,
    pub a_train: &'a [u8],
    pub y_train: &'a [u8],
    pub x_test: &'a Matrix,
    pub a_test: &'a [u8],
    pub y_test: &'a [u8],
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SweepPoint {
    pub n_modifications: usize,
    pub report: FairnessReport,
    /// Test-set DR reduction relative to point 0, in percent.
    pub dr_reduction_pct: f64,
}

/// Retrains on the training rows with the first `n` log entries applied and
/// evaluates on the held-out rows.
pub fn evaluate_prefix(
    fold: &FoldData<'_>,
    log: &ModificationLog,
    players: &PlayerMap,
    n: usize,
    train_cfg: &TrainConfig,
    scale: DrScale,
) -> Result<FairnessReport> {
    let modified = log.apply_prefix(fold.x_train, players, n)?;
    let model = train(&modified, fold.a_train, fold.y_train, train_cfg)?;
    let mut report = evaluate(&model, fold.x_test, fold.a_test, fold.y_test, scale)?;
    report.dr_train = Some(dr_dataset(&model, fold.x_train, scale)?);
    report.data_fidelity = Some(data_fidelity(fold.x_train, &modified)?);
    report.training_adjustment_rate = Some(training_adjustment_rate(fold.x_train, &modified, players)?);
    Ok(report)
}

pub fn reduction_pct(baseline: f64, value: f64) -> f64 {
    if baseline == 0.0 {
        0.0
    } else {
        100.0 * (baseline - value) / baseline
    }
}

/// Retrains at evenly spaced prefixes of the log; point 0 is the unmodified
/// baseline.
pub fn modification_sweep(
    fold: &FoldData<'_>,
    log: &ModificationLog,
    players: &PlayerMap,
    train_cfg: &TrainConfig,
    n_points: usize,
    scale: DrScale,
) -> Result<Vec<SweepPoint>> {
    let points = sweep_points(log.len(), n_points)?;
    let mut unique = points.clone();
    unique.dedup();
    let run = |&n: &usize| evaluate_prefix(fold, log, players, n, train_cfg, scale);
    #[cfg(feature = "std")]
    let reports: Vec<Result<FairnessReport>> = {
        use rayon::prelude::*;
        unique.par_iter().map(run).collect()
    };
    #[cfg(not(feature = "std"))]
    let reports: Vec<Result<FairnessReport>> = unique.iter().map(run).collect();
    let reports = reports.into_iter().collect::<Result<Vec<_>>>()?;
    let base = reports[0].dr;
    Ok(points
        .into_iter()
        .map(|n| {
            let report = reports[unique.binary_search(&n).expect("every point evaluated")].clone();
            SweepPoint {
                n_modifications: n,
                dr_reduction_pct: reduction_pct(base, report.dr),
                report,
            }
        })
        .collect())
}

/// Gap between the realized DR change and the summed attribution of the
/// selected features, per target row.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct C2Diagnostic {
    /// `|(DR(x) - DR(x_after)) - sum_{k in S_T} phi_k|` for rows with a
    /// non-empty selection.
    pub gaps: Vec<f64>,
    pub rows_with_selection: usize,
    pub mean_gap: f64,
    pub max_gap: f64,
    /// `max_i |DR(x_i) - phi0_i - sum_k phi_ik|`, the full-set case.
    pub grand_max_gap: f64,
}

/// Diagnostic of one direction under the predictor that produced `phi`.
pub fn theorem_c2_diagnostic<P: Predictor + ?Sized>(
    predictor: &P,
    target: &Matrix,
    direction: &Directional,
    players: &PlayerMap,
    cfg: &FairshapConfig,
) -> Result<C2Diagnostic> {
    let att = &direction.attribution;
    if att.phi.rows() != target.rows() {
        return Err(Error::Dimension("attribution and target differ in rows".into()));
    }
    let mut gaps = Vec::new();
    let mut grand_max_gap: f64 = 0.0;
    let mut z = alloc::vec![0.0; target.cols()];
    for i in 0..target.rows() {
        let x = target.row(i);
        let dr_before = dr_instance(predictor, x, cfg.scale);
        grand_max_gap = grand_max_gap.max((dr_before - att.reconstructed_dr(i)).abs());
        let members: Vec<bool> = att
            .phi
            .row(i)
            .iter()
            .map(|&p| cfg.threshold_mode.selects(p, cfg.threshold))
            .collect();
        if !members.iter().any(|&m| m) {
            continue;
        }
        // x_after keeps unselected features and takes the reference elsewhere.
        let keep: Vec<bool> = members.iter().map(|m| !m).collect();
        compose(x, direction.reference.rows.row(i), &keep, players, &mut z);
        let delta = dr_before - dr_instance(predictor, &z, cfg.scale);
        let attributed: f64 = att
            .phi
            .row(i)
            .iter()
            .zip(&members)
            .filter(|(_, &m)| m)
            .map(|(p, _)| p)
            .sum();
        gaps.push((delta - attributed).abs());
    }
    let rows_with_selection = gaps.len();
    let mean_gap = if gaps.is_empty() {
        0.0
    } else {
        gaps.iter().sum::<f64>() / gaps.len() as f64
    };
    let max_gap = gaps.iter().copied().fold(0.0, f64::max);
    Ok(C2Diagnostic {
        gaps,
        rows_with_selection,
        mean_gap,
        max_gap,
        grand_max_gap,
    })
}
