//! Shapley attribution.
//!
//! Three characteristic functions are provided: the baseline game (one
//! reference row), the random-baseline game (an average over reference rows),
//! and the discriminative-risk (DR) game that drives FairSHAP. Players are raw
//! features: a categorical feature's one-hot block joins or leaves a coalition
//! as a unit. The sensitive attribute is never a player.
//!
//! Two estimators: exact subset enumeration for up to [`D_MAX_EXACT`] players
//! and uniform permutation sampling beyond that.

use alloc::format;
use alloc::vec::Vec;

use rand::seq::SliceRandom;

pub use crate::dataset::PlayerMap;
use crate::error::{Error, Result};
use crate::fairness::{dr_instance, DrScale};
use crate::matching::{conditional_row, MatchingPlan};
use crate::matrix::Matrix;
use crate::model::Predictor;
use crate::rng;

/// Largest player count handled by exact enumeration by default.
pub const D_MAX_EXACT: usize = 14;

/// A cooperative game over `players()` players. `members[k]` marks whether
/// player `k` is in the coalition.
pub trait CoalitionGame {
    fn players(&self) -> usize;
    fn value(&self, members: &[bool]) -> f64;
}

/// Writes `x` on member players and `reference` elsewhere into `out`.
pub fn compose(x: &[f64], reference: &[f64], members: &[bool], players: &PlayerMap, out: &mut [f64]) {
    out.copy_from_slice(reference);
    for (k, r) in players.ranges().iter().enumerate() {
        if members[k] {
            out[r.clone()].copy_from_slice(&x[r.clone()]);
        }
    }
}

/// `v(S) = f(x_S; r_{F\S}) - f(r)`, both evaluated with the instance's own
/// sensitive value.
pub struct BaselineGame<'a, P: ?Sized> {
    predictor: &'a P,
    instance: &'a [f64],
    reference: &'a [f64],
    sensitive: u8,
    players: &'a PlayerMap,
    reference_value: f64,
}

impl<'a, P: Predictor + ?Sized> BaselineGame<'a, P> {
    pub fn new(
        predictor: &'a P,
        instance: &'a [f64],
        reference: &'a [f64],
        sensitive: u8,
        players: &'a PlayerMap,
    ) -> Result<Self> {
        if instance.len() != reference.len() || players.columns() != instance.len() {
            return Err(Error::Dimension("instance, reference and players disagree".into()));
        }
        Ok(Self {
            predictor,
            instance,
            reference,
            sensitive,
            players,
            reference_value: predictor.predict_proba(reference, sensitive),
        })
    }
}

impl<P: Predictor + ?Sized> CoalitionGame for BaselineGame<'_, P> {
    fn players(&self) -> usize {
        self.players.len()
    }

    fn value(&self, members: &[bool]) -> f64 {
        let mut z = alloc::vec![0.0; self.instance.len()];
        compose(self.instance, self.reference, members, self.players, &mut z);
        self.predictor.predict_proba(&z, self.sensitive) - self.reference_value
    }
}

/// Baseline game value for one coalition.
pub fn value_baseline<P: Predictor + ?Sized>(
    predictor: &P,
    instance: &[f64],
    reference: &[f64],
    sensitive: u8,
    players: &PlayerMap,
    members: &[bool],
) -> Result<f64> {
    Ok(BaselineGame::new(predictor, instance, reference, sensitive, players)?.value(members))
}

/// `v(S) = E_{x'}[f(x_S; x'_{F\S})] - E_{x'}[f(x')]` over a reference sample.
/// When the sample exceeds `sample_cap` rows a seeded subsample is used.
pub struct RandomBaselineGame<'a, P: ?Sized> {
    predictor: &'a P,
    instance: &'a [f64],
    references: Vec<&'a [f64]>,
    sensitive: u8,
    players: &'a PlayerMap,
    reference_mean: f64,
}

impl<'a, P: Predictor + ?Sized> RandomBaselineGame<'a, P> {
    pub fn new(
        predictor: &'a P,
        instance: &'a [f64],
        references: &'a Matrix,
        sensitive: u8,
        players: &'a PlayerMap,
        sample_cap: usize,
        seed: u64,
    ) -> Result<Self> {
        if references.rows() == 0 {
            return Err(Error::Dataset("reference sample is empty".into()));
        }
        if references.cols() != instance.len() || players.columns() != instance.len() {
            return Err(Error::Dimension("instance, references and players disagree".into()));
        }
        let mut idx: Vec<usize> = (0..references.rows()).collect();
        if sample_cap > 0 && idx.len() > sample_cap {
            let mut r = rng::seeded(seed);
            idx.shuffle(&mut r);
            idx.truncate(sample_cap);
            idx.sort_unstable();
        }
        let references: Vec<&[f64]> = idx.iter().map(|&i| references.row(i)).collect();
        let reference_mean = references
            .iter()
            .map(|r| predictor.predict_proba(r, sensitive))
            .sum::<f64>()
            / references.len() as f64;
        Ok(Self {
            predictor,
            instance,
            references,
            sensitive,
            players,
            reference_mean,
        })
    }
}

impl<P: Predictor + ?Sized> CoalitionGame for RandomBaselineGame<'_, P> {
    fn players(&self) -> usize {
        self.players.len()
    }

    fn value(&self, members: &[bool]) -> f64 {
        let mut z = alloc::vec![0.0; self.instance.len()];
        let mut total = 0.0;
        for r in &self.references {
            compose(self.instance, r, members, self.players, &mut z);
            total += self.predictor.predict_proba(&z, self.sensitive);
        }
        total / self.references.len() as f64 - self.reference_mean
    }
}

#[allow(clippy::too_many_arguments)]
pub fn value_random_baseline<P: Predictor + ?Sized>(
    predictor: &P,
    instance: &[f64],
    references: &Matrix,
    sensitive: u8,
    players: &PlayerMap,
    members: &[bool],
    sample_cap: usize,
    seed: u64,
) -> Result<f64> {
    Ok(
        RandomBaselineGame::new(predictor, instance, references, sensitive, players, sample_cap, seed)?
            .value(members),
    )
}

/// DR game of one target row:
/// `v(S) = sum_j p(j|i) DR(g_{i,S}; g~_{j,F\S}) - sum_j P(j) DR(g~_j)`.
///
/// The second term is the plan-marginal DR of the other group; it is constant
/// in `S` and only shifts `v(∅)`.
pub struct DrGame<'a, P: ?Sized> {
    predictor: &'a P,
    target: &'a [f64],
    atoms: Vec<(&'a [f64], f64)>,
    marginal_term: f64,
    players: &'a PlayerMap,
    scale: DrScale,
}

impl<P: Predictor + ?Sized> DrGame<'_, P> {
    /// Expected DR of the matched references, `v(∅)` plus the marginal term.
    pub fn reference_dr(&self) -> f64 {
        self.atoms
            .iter()
            .map(|(r, w)| w * dr_instance(self.predictor, r, self.scale))
            .sum()
    }

    pub fn marginal_term(&self) -> f64 {
        self.marginal_term
    }

    pub fn target_dr(&self) -> f64 {
        dr_instance(self.predictor, self.target, self.scale)
    }
}

impl<P: Predictor + ?Sized> CoalitionGame for DrGame<'_, P> {
    fn players(&self) -> usize {
        self.players.len()
    }

    fn value(&self, members: &[bool]) -> f64 {
        let mut z = alloc::vec![0.0; self.target.len()];
        let mut total = 0.0;
        for (r, w) in &self.atoms {
            compose(self.target, r, members, self.players, &mut z);
            total += w * dr_instance(self.predictor, &z, self.scale);
        }
        total - self.marginal_term
    }
}

/// Conditional atoms below this probability are dropped and the rest
/// renormalized. Nearest-neighbour plans have a single atom and are exact.
pub const ATOM_CUTOFF: f64 = 1e-6;

/// Shared state for the DR games of every row of a target group. The
/// marginal term is computed once per (plan, predictor).
pub struct DrGameContext<'a, P: ?Sized> {
    predictor: &'a P,
    target: &'a Matrix,
    other: &'a Matrix,
    plan: &'a MatchingPlan,
    players: &'a PlayerMap,
    scale: DrScale,
    marginal_term: f64,
}

impl<'a, P: Predictor + ?Sized> DrGameContext<'a, P> {
    pub fn new(
        predictor: &'a P,
        target: &'a Matrix,
        other: &'a Matrix,
        plan: &'a MatchingPlan,
        players: &'a PlayerMap,
        scale: DrScale,
    ) -> Result<Self> {
        if plan.target_rows() != target.rows() || plan.other_rows() != other.rows() {
            return Err(Error::Dimension(format!(
                "plan is {}x{} but groups have {} and {} rows",
                plan.target_rows(),
                plan.other_rows(),
                target.rows(),
                other.rows()
            )));
        }
        if target.cols() != other.cols() || players.columns() != target.cols() {
            return Err(Error::Dimension("groups and player map disagree on width".into()));
        }
        let marginal_term = plan
            .other_marginal()
            .iter()
            .enumerate()
            .filter(|(_, &w)| w > 0.0)
            .map(|(j, &w)| w * dr_instance(predictor, other.row(j), scale))
            .sum();
        Ok(Self {
            predictor,
            target,
            other,
            plan,
            players,
            scale,
            marginal_term,
        })
    }

    pub fn marginal_term(&self) -> f64 {
        self.marginal_term
    }

    pub fn game(&self, i: usize) -> Result<DrGame<'a, P>> {
        let conditional = conditional_row(self.plan, i)?;
        let kept: f64 = conditional.iter().filter(|&&p| p >= ATOM_CUTOFF).sum();
        let atoms = conditional
            .iter()
            .enumerate()
            .filter(|(_, &p)| p >= ATOM_CUTOFF)
            .map(|(j, &p)| (self.other.row(j), p / kept))
            .collect();
        Ok(DrGame {
            predictor: self.predictor,
            target: self.target.row(i),
            atoms,
            marginal_term: self.marginal_term,
            players: self.players,
            scale: self.scale,
        })
    }
}

/// DR game value of target row `i` for one coalition.
#[allow(clippy::too_many_arguments)]
pub fn value_dr_game<P: Predictor + ?Sized>(
    predictor: &P,
    i: usize,
    members: &[bool],
    plan: &MatchingPlan,
    target: &Matrix,
    other: &Matrix,
    players: &PlayerMap,
    scale: DrScale,
) -> Result<f64> {
    let ctx = DrGameContext::new(predictor, target, other, plan, players, scale)?;
    Ok(ctx.game(i)?.value(members))
}

/// Explicit value table indexed by coalition bitmask (bit `k` = player `k`).
#[derive(Debug, Clone, PartialEq)]
pub struct TableGame {
    players: usize,
    values: Vec<f64>,
}

impl TableGame {
    pub fn new(players: usize, values: Vec<f64>) -> Result<Self> {
        if players >= usize::BITS as usize || values.len() != 1usize << players {
            return Err(Error::InvalidParameter(format!(
                "a {players}-player table needs 2^{players} values"
            )));
        }
        Ok(Self { players, values })
    }

    pub fn from_fn(players: usize, f: impl Fn(usize) -> f64) -> Self {
        Self {
            players,
            values: (0..1usize << players).map(f).collect(),
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

pub fn mask_of(members: &[bool]) -> usize {
    members
        .iter()
        .enumerate()
        .filter(|(_, &m)| m)
        .fold(0, |acc, (k, _)| acc | (1 << k))
}

impl CoalitionGame for TableGame {
    fn players(&self) -> usize {
        self.players
    }

    fn value(&self, members: &[bool]) -> f64 {
        self.values[mask_of(members)]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum EstimatorKind {
    Exact,
    Permutation,
}

/// Attribution of one game.
#[derive(Debug, Clone, PartialEq)]
pub struct ShapleyValues {
    pub phi: Vec<f64>,
    /// `v(∅)`.
    pub empty_value: f64,
    /// `v(F)`.
    pub grand_value: f64,
    /// Monte Carlo standard errors (permutation estimator only).
    pub std_err: Option<Vec<f64>>,
    pub estimator: EstimatorKind,
    pub permutations: usize,
}

fn members_of(mask: usize, players: usize) -> Vec<bool> {
    (0..players).map(|k| mask & (1 << k) != 0).collect()
}

/// Exact Shapley values by enumerating all `2^d` coalitions.
pub fn exact_shapley<G: CoalitionGame + ?Sized>(game: &G) -> Result<ShapleyValues> {
    exact_shapley_with_limit(game, D_MAX_EXACT)
}

pub fn exact_shapley_with_limit<G: CoalitionGame + ?Sized>(game: &G, max_players: usize) -> Result<ShapleyValues> {
    let d = game.players();
    if d > max_players {
        return Err(Error::TooManyPlayers {
            players: d,
            max: max_players,
        });
    }
    let size = 1usize << d;
    let values: Vec<f64> = (0..size).map(|mask| game.value(&members_of(mask, d))).collect();
    // weight(s) = s! (d - s - 1)! / d!
    let mut factorial = alloc::vec![1.0f64; d + 1];
    for k in 1..=d {
        factorial[k] = factorial[k - 1] * k as f64;
    }
    let weight: Vec<f64> = (0..d)
        .map(|s| factorial[s] * factorial[d - s - 1] / factorial[d])
        .collect();
    let mut phi = alloc::vec![0.0; d];
    for mask in 0..size {
        let s = mask.count_ones() as usize;
        for (k, p) in phi.iter_mut().enumerate() {
            let bit = 1 << k;
            if mask & bit == 0 {
                *p += weight[s] * (values[mask | bit] - values[mask]);
            }
        }
    }
    Ok(ShapleyValues {
        phi,
        empty_value: values[0],
        grand_value: values[size - 1],
        std_err: None,
        estimator: EstimatorKind::Exact,
        permutations: 0,
    })
}

/// Unbiased permutation-sampling estimator with per-player standard errors.
/// Every sampled permutation telescopes to `v(F) - v(∅)`, so efficiency holds
/// exactly for the estimate as well.
pub fn sampled_shapley<G: CoalitionGame + ?Sized>(
    game: &G,
    n_permutations: usize,
    seed: u64,
) -> Result<ShapleyValues> {
    if n_permutations == 0 {
        return Err(Error::InvalidParameter("at least one permutation is required".into()));
    }
    let d = game.players();
    let mut members = alloc::vec![false; d];
    let empty_value = game.value(&members);
    let grand_value = game.value(&alloc::vec![true; d]);
    let mut sum = alloc::vec![0.0; d];
    let mut sum_sq = alloc::vec![0.0; d];
    let mut order: Vec<usize> = (0..d).collect();
    let mut r = rng::seeded(seed);
    for _ in 0..n_permutations {
        order.shuffle(&mut r);
        members.iter_mut().for_each(|m| *m = false);
        let mut previous = empty_value;
        for (step, &k) in order.iter().enumerate() {
            members[k] = true;
            let current = if step + 1 == d { grand_value } else { game.value(&members) };
            let marginal = current - previous;
            sum[k] += marginal;
            sum_sq[k] += marginal * marginal;
            previous = current;
        }
    }
    let n = n_permutations as f64;
    let phi: Vec<f64> = sum.iter().map(|s| s / n).collect();
    let std_err = sum_sq
        .iter()
        .zip(&phi)
        .map(|(sq, mean)| {
            if n_permutations < 2 {
                f64::INFINITY
            } else {
                let var = ((sq - n * mean * mean) / (n - 1.0)).max(0.0);
                libm::sqrt(var / n)
            }
        })
        .collect();
    Ok(ShapleyValues {
        phi,
        empty_value,
        grand_value,
        std_err: Some(std_err),
        estimator: EstimatorKind::Permutation,
        permutations: n_permutations,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum EstimatorMode {
    /// Exact up to `max_exact_players`, permutation sampling beyond.
    #[default]
    Auto,
    Exact,
    Permutation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EstimatorConfig {
    pub mode: EstimatorMode,
    pub max_exact_players: usize,
    pub permutations: usize,
    pub seed: u64,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            mode: EstimatorMode::Auto,
            max_exact_players: D_MAX_EXACT,
            permutations: 200,
            seed: 0,
        }
    }
}

impl EstimatorConfig {
    pub fn exact() -> Self {
        Self {
            mode: EstimatorMode::Exact,
            ..Self::default()
        }
    }

    pub fn kind_for(&self, players: usize) -> EstimatorKind {
        match self.mode {
            EstimatorMode::Exact => EstimatorKind::Exact,
            EstimatorMode::Permutation => EstimatorKind::Permutation,
            EstimatorMode::Auto if players <= self.max_exact_players => EstimatorKind::Exact,
            EstimatorMode::Auto => EstimatorKind::Permutation,
        }
    }

    /// Runs the configured estimator; `stream` decorrelates seeds across rows.
    pub fn estimate<G: CoalitionGame + ?Sized>(&self, game: &G, stream: u64) -> Result<ShapleyValues> {
        match self.kind_for(game.players()) {
            EstimatorKind::Exact => exact_shapley_with_limit(game, self.max_exact_players),
            EstimatorKind::Permutation => {
                sampled_shapley(game, self.permutations, rng::derive_seed(self.seed, stream))
            }
        }
    }
}

/// DR-game attributions for every row of a target group.
#[derive(Debug, Clone, PartialEq)]
pub struct ShapleyAttribution {
    /// `n x players`, one column per raw feature.
    pub phi: Matrix,
    /// Per-row baseline term: expected DR of the matched references, so that
    /// `phi0[i] + sum_k phi[i][k] == DR(target row i)`.
    pub phi0: Vec<f64>,
    /// Plan-marginal DR of the other group; `v_i(∅) = phi0[i] - marginal_term`.
    pub marginal_term: f64,
    pub std_err: Option<Matrix>,
    pub estimator: EstimatorKind,
    pub permutations: usize,
    pub seed: u64,
}

impl ShapleyAttribution {
    /// Copies each raw-feature value onto that feature's encoded columns.
    pub fn broadcast(&self, players: &PlayerMap) -> Matrix {
        let mut out = Matrix::zeros(self.phi.rows(), players.columns());
        for i in 0..self.phi.rows() {
            for (k, r) in players.ranges().iter().enumerate() {
                let v = self.phi.get(i, k);
                out.row_mut(i)[r.clone()].iter_mut().for_each(|c| *c = v);
            }
        }
        out
    }

    /// `phi0[i] + sum_k phi[i][k]`.
    pub fn reconstructed_dr(&self, i: usize) -> f64 {
        self.phi0[i] + self.phi.row(i).iter().sum::<f64>()
    }
}

/// Attributes the DR game of every target row. Rows are independent; with
/// the `std` feature they are evaluated in parallel with identical results.
pub fn shapley_matrix<P: Predictor + ?Sized>(
    predictor: &P,
    target: &Matrix,
    other: &Matrix,
    plan: &MatchingPlan,
    players: &PlayerMap,
    cfg: &EstimatorConfig,
    scale: DrScale,
) -> Result<ShapleyAttribution> {
    let ctx = DrGameContext::new(predictor, target, other, plan, players, scale)?;
    let row = |i: usize| -> Result<(ShapleyValues, f64)> {
        let game = ctx.game(i)?;
        let values = cfg.estimate(&game, i as u64)?;
        Ok((values, game.reference_dr()))
    };
    let n = target.rows();
    #[cfg(feature = "std")]
    let rows: Vec<Result<(ShapleyValues, f64)>> = {
        use rayon::prelude::*;
        (0..n).into_par_iter().map(row).collect()
    };
    #[cfg(not(feature = "std"))]
    let rows: Vec<Result<(ShapleyValues, f64)>> = (0..n).map(row).collect();

    let d = players.len();
    let mut phi = Matrix::zeros(n, d);
    let mut phi0 = Vec::with_capacity(n);
    let estimator = cfg.kind_for(d);
    let mut std_err = (estimator == EstimatorKind::Permutation).then(|| Matrix::zeros(n, d));
    for (i, r) in rows.into_iter().enumerate() {
        let (values, reference_dr) = r?;
        phi.row_mut(i).copy_from_slice(&values.phi);
        phi0.push(reference_dr);
        if let (Some(se), Some(row_se)) = (std_err.as_mut(), values.std_err.as_ref()) {
            se.row_mut(i).copy_from_slice(row_se);
        }
    }
    Ok(ShapleyAttribution {
        phi,
        phi0,
        marginal_term: ctx.marginal_term(),
        std_err,
        estimator,
        permutations: if estimator == EstimatorKind::Permutation { cfg.permutations } else { 0 },
        seed: cfg.seed,
    })
}

/// Draws a uniform random coalition; used by property suites.
pub fn random_members<R: rand::Rng>(players: usize, r: &mut R) -> Vec<bool> {
    (0..players).map(|_| r.random_bool(0.5)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matching::nearest_neighbor_match;
    use alloc::vec;

    #[test]
    fn additive_game_recovers_weights() {
        let w = [0.5, -1.0, 2.0, 0.25];
        let game = TableGame::from_fn(4, |mask| (0..4).filter(|k| mask & (1 << k) != 0).map(|k| w[k]).sum());
        let exact = exact_shapley(&game).unwrap();
        for k in 0..4 {
            assert!((exact.phi[k] - w[k]).abs() < 1e-12);
        }
        let sampled = sampled_shapley(&game, 1, 9).unwrap();
        for k in 0..4 {
            assert!((sampled.phi[k] - w[k]).abs() < 1e-12);
        }
    }

    #[test]
    fn unanimity_game_splits_evenly() {
        let game = TableGame::new(2, vec![0.0, 0.0, 0.0, 1.0]).unwrap();
        let v = exact_shapley(&game).unwrap();
        assert_eq!(v.phi, vec![0.5, 0.5]);
    }

    #[test]
    fn too_many_players_for_exact() {
        let game = TableGame::from_fn(15, |_| 0.0);
        assert!(matches!(
            exact_shapley(&game),
            Err(Error::TooManyPlayers { players: 15, max: 14 })
        ));
    }

    #[test]
    fn baseline_game_edges() {
        let f = |x: &[f64], _: u8| 0.1 * x[0] + 0.2 * x[1] + 0.3;
        let players = PlayerMap::singletons(2);
        let x = [1.0, 2.0];
        let r = [0.5, -1.0];
        let full = value_baseline(&f, &x, &r, 0, &players, &[true, true]).unwrap();
        assert!((full - (f(&x, 0) - f(&r, 0))).abs() < 1e-15);
        assert_eq!(value_baseline(&f, &x, &r, 0, &players, &[false, false]).unwrap(), 0.0);
        let refs = Matrix::from_rows(&[r]).unwrap();
        let rb = value_random_baseline(&f, &x, &refs, 0, &players, &[true, false], 0, 1).unwrap();
        let b = value_baseline(&f, &x, &r, 0, &players, &[true, false]).unwrap();
        assert_eq!(rb, b);
    }

    #[test]
    fn dr_game_vanishes_for_sensitive_blind_model() {
        let f = |x: &[f64], _: u8| crate::model::sigmoid(x[0] - x[1]);
        let g = Matrix::from_rows(&[[1.0, 0.0], [0.0, 2.0]]).unwrap();
        let h = Matrix::from_rows(&[[0.5, 0.5], [3.0, 1.0], [1.0, 1.0]]).unwrap();
        let plan = nearest_neighbor_match(&g, &h).unwrap();
        let players = PlayerMap::singletons(2);
        let att = shapley_matrix(&f, &g, &h, &plan, &players, &EstimatorConfig::exact(), DrScale::Probability)
            .unwrap();
        assert!(att.phi.as_slice().iter().all(|&v| v == 0.0));
        assert_eq!(att.marginal_term, 0.0);
    }

    #[test]
    fn single_player_gets_the_whole_gap() {
        let f = |x: &[f64], a: u8| crate::model::sigmoid(x[0] * (1.0 + a as f64));
        let g = Matrix::from_rows(&[[1.0], [2.0]]).unwrap();
        let h = Matrix::from_rows(&[[0.0], [1.5]]).unwrap();
        let plan = nearest_neighbor_match(&g, &h).unwrap();
        let players = PlayerMap::singletons(1);
        let ctx = DrGameContext::new(&f, &g, &h, &plan, &players, DrScale::Probability).unwrap();
        let att = shapley_matrix(&f, &g, &h, &plan, &players, &EstimatorConfig::exact(), DrScale::Probability)
            .unwrap();
        for i in 0..2 {
            let game = ctx.game(i).unwrap();
            let gap = game.value(&[true]) - game.value(&[false]);
            assert!((att.phi.get(i, 0) - gap).abs() < 1e-15);
        }
    }

    #[test]
    fn broadcast_fills_blocks() {
        let att = ShapleyAttribution {
            phi: Matrix::from_rows(&[[1.0, 2.0]]).unwrap(),
            phi0: vec![0.0],
            marginal_term: 0.0,
            std_err: None,
            estimator: EstimatorKind::Exact,
            permutations: 0,
            seed: 0,
        };
        let players = PlayerMap::new(vec![0..1, 1..4]).unwrap();
        assert_eq!(att.broadcast(&players).row(0), &[1.0, 2.0, 2.0, 2.0]);
    }
}
