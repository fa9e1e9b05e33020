//! Cross-group matching. A plan is a joint distribution over (target row,
//! other-group row) pairs; its rows condition into per-target reference
//! distributions and its argmax gives the reference set used for edits.
//!
//! Distances are squared Euclidean on the encoded non-sensitive block.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::matrix::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum MatchMethod {
    NearestNeighbour,
    OptimalTransport,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum CostMetric {
    SquaredEuclidean,
}

/// Sinkhorn diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct SinkhornStats {
    pub iterations: usize,
    /// Row-marginal violation of the best Sinkhorn iterate.
    pub residual: f64,
    /// Largest marginal violation of the returned plan, after rounding.
    pub marginal_error: f64,
    pub converged: bool,
    /// Absolute regularisation used (`epsilon` times the mean cost).
    pub epsilon: f64,
    /// Dual objective after each iteration; nondecreasing under exact
    /// block-coordinate updates.
    pub dual_trace: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatchingPlan {
    pub plan: Matrix,
    pub method: MatchMethod,
    pub metric: CostMetric,
    pub sinkhorn: Option<SinkhornStats>,
}

impl MatchingPlan {
    pub fn target_rows(&self) -> usize {
        self.plan.rows()
    }

    pub fn other_rows(&self) -> usize {
        self.plan.cols()
    }

    /// Marginal of the plan over the other group (column sums).
    pub fn other_marginal(&self) -> Vec<f64> {
        self.plan.col_sums()
    }

    pub fn transport_cost(&self, cost: &Matrix) -> f64 {
        self.plan
            .as_slice()
            .iter()
            .zip(cost.as_slice())
            .map(|(p, c)| p * c)
            .sum()
    }

    /// Nonzero `(j, mass)` entries of row `i`.
    pub fn row_support(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.plan
            .row(i)
            .iter()
            .enumerate()
            .filter(|(_, &p)| p > 0.0)
            .map(|(j, &p)| (j, p))
    }

    /// Checks nonnegativity, unit mass, and a positive entry in every row.
    pub fn validate(&self) -> Result<()> {
        if self.plan.as_slice().iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
            return Err(Error::NonFinite("plan has a negative or non-finite entry".into()));
        }
        let total = self.plan.sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidParameter(format!("plan mass {total} is not 1")));
        }
        for i in 0..self.plan.rows() {
            if self.plan.row(i).iter().all(|&p| p == 0.0) {
                return Err(Error::InvalidParameter(format!("plan row {i} has no mass")));
            }
        }
        Ok(())
    }
}

fn check_groups(target: &Matrix, other: &Matrix) -> Result<()> {
    if target.rows() == 0 || other.rows() == 0 {
        return Err(Error::Dataset("both groups need at least one row".into()));
    }
    if target.cols() != other.cols() {
        return Err(Error::Dimension(format!(
            "groups have {} and {} columns",
            target.cols(),
            other.cols()
        )));
    }
    if !target.all_finite() || !other.all_finite() {
        return Err(Error::NonFinite("feature values".into()));
    }
    Ok(())
}

#[inline]
pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub fn cost_matrix(target: &Matrix, other: &Matrix) -> Matrix {
    let mut cost = Matrix::zeros(target.rows(), other.rows());
    for i in 0..target.rows() {
        let t = target.row(i);
        for (j, c) in cost.row_mut(i).iter_mut().enumerate() {
            *c = squared_distance(t, other.row(j));
        }
    }
    cost
}

fn nearest_index(row: &[f64], other: &Matrix) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for j in 0..other.rows() {
        let d = squared_distance(row, other.row(j));
        if d < best_d {
            best = j;
            best_d = d;
        }
    }
    best
}

/// Each target row puts mass `1/n` on its nearest other-group row; ties go
/// to the smallest index.
pub fn nearest_neighbor_match(target: &Matrix, other: &Matrix) -> Result<MatchingPlan> {
    check_groups(target, other)?;
    let n = target.rows();
    #[cfg(feature = "std")]
    let nearest: Vec<usize> = {
        use rayon::prelude::*;
        (0..n)
            .into_par_iter()
            .map(|i| nearest_index(target.row(i), other))
            .collect()
    };
    #[cfg(not(feature = "std"))]
    let nearest: Vec<usize> = (0..n).map(|i| nearest_index(target.row(i), other)).collect();

    let mut plan = Matrix::zeros(n, other.rows());
    let mass = 1.0 / n as f64;
    for (i, j) in nearest.into_iter().enumerate() {
        plan.set(i, j, mass);
    }
    Ok(MatchingPlan {
        plan,
        method: MatchMethod::NearestNeighbour,
        metric: CostMetric::SquaredEuclidean,
        sinkhorn: None,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SinkhornParams {
    /// Regularisation relative to the mean pairwise cost.
    pub epsilon: f64,
    pub max_iters: usize,
    pub tol: f64,
}

impl Default for SinkhornParams {
    fn default() -> Self {
        Self {
            epsilon: 0.05,
            max_iters: 10_000,
            tol: 1e-6,
        }
    }
}

fn log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + libm::log(values.map(|v| libm::exp(v - max)).sum::<f64>())
}

/// Entropic optimal transport with uniform marginals, iterated in the log
/// domain on dual potentials. When `tol` is not reached within `max_iters`
/// the best iterate is returned with `converged == false`.
pub fn sinkhorn_ot_match(
    target: &Matrix,
    other: &Matrix,
    params: &SinkhornParams,
) -> Result<MatchingPlan> {
    check_groups(target, other)?;
    if !(params.epsilon > 0.0 && params.epsilon.is_finite()) {
        return Err(Error::InvalidParameter("epsilon must be positive".into()));
    }
    if !(params.tol > 0.0) || params.max_iters == 0 {
        return Err(Error::InvalidParameter("tol and max_iters must be positive".into()));
    }
    let cost = cost_matrix(target, other);
    sinkhorn_with_cost(&cost, params)
}

/// Moves a near-feasible plan onto the transport polytope with uniform
/// marginals `a` (rows) and `b` (columns): scale overfull rows and columns
/// down, then spread the missing mass as a rank-one correction.
fn round_to_marginals(plan: &mut Matrix, a: f64, b: f64) {
    let (n, m) = (plan.rows(), plan.cols());
    for i in 0..n {
        let s: f64 = plan.row(i).iter().sum();
        if s > a {
            plan.row_mut(i).iter_mut().for_each(|p| *p *= a / s);
        }
    }
    let cols = plan.col_sums();
    for i in 0..n {
        for (j, &s) in cols.iter().enumerate() {
            if s > b {
                plan.set(i, j, plan.get(i, j) * b / s);
            }
        }
    }
    let row_gap: Vec<f64> = plan.row_sums().iter().map(|s| (a - s).max(0.0)).collect();
    let col_gap: Vec<f64> = plan.col_sums().iter().map(|s| (b - s).max(0.0)).collect();
    let total: f64 = row_gap.iter().sum();
    if total > 0.0 {
        for i in 0..n {
            for j in 0..m {
                plan.set(i, j, plan.get(i, j) + row_gap[i] * col_gap[j] / total);
            }
        }
    }
}

/// Sinkhorn on an explicit cost matrix. The best iterate is rounded onto
/// the uniform-marginal polytope, so the returned plan is feasible even when
/// `converged` is false.
pub fn sinkhorn_with_cost(cost: &Matrix, params: &SinkhornParams) -> Result<MatchingPlan> {
    let (n, m) = (cost.rows(), cost.cols());
    let mean_cost = cost.sum() / (n * m) as f64;
    let eps = if mean_cost > 0.0 {
        params.epsilon * mean_cost
    } else {
        params.epsilon
    };
    let log_a = -libm::log(n as f64);
    let log_b = -libm::log(m as f64);
    let (a, b) = (1.0 / n as f64, 1.0 / m as f64);
    let mut f = alloc::vec![0.0; n];
    let mut g = alloc::vec![0.0; m];

    let row_error = |f: &[f64], g: &[f64]| -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..n {
            let s: f64 = (0..m)
                .map(|j| libm::exp((f[i] + g[j] - cost.get(i, j)) / eps))
                .sum();
            worst = worst.max((s - a).abs());
        }
        worst
    };
    // After the g-update the plan's total mass is exactly one, so the dual
    // objective <f,a> + <g,b> - eps * (mass - 1) reduces to its linear part.
    let dual = |f: &[f64], g: &[f64]| -> f64 { a * f.iter().sum::<f64>() + b * g.iter().sum::<f64>() };

    let mut best: (f64, Vec<f64>, Vec<f64>, usize) = (f64::INFINITY, f.clone(), g.clone(), 0);
    let mut dual_trace = Vec::new();
    let mut iterations = 0;
    for it in 1..=params.max_iters {
        iterations = it;
        for i in 0..n {
            let lse = log_sum_exp((0..m).map(|j| (g[j] - cost.get(i, j)) / eps));
            f[i] = eps * (log_a - lse);
        }
        for j in 0..m {
            let lse = log_sum_exp((0..n).map(|i| (f[i] - cost.get(i, j)) / eps));
            g[j] = eps * (log_b - lse);
        }
        if f.iter().chain(&g).any(|v| !v.is_finite()) {
            return Err(Error::Underflow(format!("non-finite potential at iteration {it}")));
        }
        dual_trace.push(dual(&f, &g));
        // column marginals are exact after the g-update
        let err = row_error(&f, &g);
        if err < best.0 {
            best = (err, f.clone(), g.clone(), it);
        }
        if err <= params.tol {
            break;
        }
    }
    let (residual, f, g, _) = best;
    let mut plan = Matrix::zeros(n, m);
    for i in 0..n {
        for j in 0..m {
            plan.set(i, j, libm::exp((f[i] + g[j] - cost.get(i, j)) / eps));
        }
        if plan.row(i).iter().all(|&p| p == 0.0) {
            return Err(Error::Underflow(format!("row {i} lost all mass")));
        }
    }
    round_to_marginals(&mut plan, a, b);
    let marginal_error = plan
        .row_sums()
        .iter()
        .map(|s| (s - a).abs())
        .chain(plan.col_sums().iter().map(|s| (s - b).abs()))
        .fold(0.0, f64::max);
    let plan = MatchingPlan {
        plan,
        method: MatchMethod::OptimalTransport,
        metric: CostMetric::SquaredEuclidean,
        sinkhorn: Some(SinkhornStats {
            iterations,
            residual,
            marginal_error,
            converged: residual <= params.tol,
            epsilon: eps,
            dual_trace,
        }),
    };
    Ok(plan)
}

/// Per-target-row matched counterparts.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceSet {
    pub rows: Matrix,
    /// `source[i]` is the other-group row copied into `rows[i]`.
    pub source: Vec<usize>,
}

/// Argmax of each plan row, ties to the smallest index.
pub fn argmax_row(row: &[f64]) -> usize {
    let mut best = 0;
    for (j, &p) in row.iter().enumerate() {
        if p > row[best] {
            best = j;
        }
    }
    best
}

pub fn build_reference(plan: &MatchingPlan, other: &Matrix) -> Result<ReferenceSet> {
    if plan.other_rows() != other.rows() {
        return Err(Error::Dimension(format!(
            "plan has {} columns but the other group has {} rows",
            plan.other_rows(),
            other.rows()
        )));
    }
    let source: Vec<usize> = (0..plan.target_rows())
        .map(|i| argmax_row(plan.plan.row(i)))
        .collect();
    Ok(ReferenceSet {
        rows: other.select_rows(&source),
        source,
    })
}

/// Row `i` of the plan normalized into a conditional distribution.
pub fn conditional_row(plan: &MatchingPlan, i: usize) -> Result<Vec<f64>> {
    if i >= plan.target_rows() {
        return Err(Error::InvalidParameter(format!("row {i} out of range")));
    }
    let row = plan.plan.row(i);
    let total: f64 = row.iter().sum();
    if !(total > 0.0) {
        return Err(Error::InvalidParameter(format!("plan row {i} has no mass")));
    }
    Ok(row.iter().map(|p| p / total).collect())
}
