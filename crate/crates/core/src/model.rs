//! Predictors. Every model takes the encoded non-sensitive block plus the
//! sensitive value `A` as an explicit extra input, so `f(x, A=0)` and
//! `f(x, A=1)` are both first-class queries.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Probability of the positive class for a non-sensitive feature vector and
/// a sensitive value. Implementations must return values in `[0, 1]` and be
/// deterministic.
pub trait Predictor: Sync {
    fn predict_proba(&self, features: &[f64], sensitive: u8) -> f64;
}

impl<F> Predictor for F
where
    F: Fn(&[f64], u8) -> f64 + Sync,
{
    fn predict_proba(&self, features: &[f64], sensitive: u8) -> f64 {
        self(features, sensitive)
    }
}

/// Hard label: 1 iff the probability reaches `threshold`.
pub fn predict_label<P: Predictor + ?Sized>(
    predictor: &P,
    features: &[f64],
    sensitive: u8,
    threshold: f64,
) -> u8 {
    (predictor.predict_proba(features, sensitive) >= threshold) as u8
}

pub const DEFAULT_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum ModelKind {
    Logistic,
    BoostedStumps,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TrainConfig {
    pub kind: ModelKind,
    pub learning_rate: f64,
    /// Gradient-descent iterations (logistic).
    pub iterations: usize,
    /// L2 penalty on logistic weights; leaf-score regulariser for stumps.
    pub l2_penalty: f64,
    /// Boosting rounds (stumps). Zero gives the constant base-rate model.
    pub tree_count: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            kind: ModelKind::Logistic,
            learning_rate: 0.5,
            iterations: 1000,
            l2_penalty: 1e-3,
            tree_count: 100,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidParameter("learning_rate must be positive".into()));
        }
        if !(self.l2_penalty >= 0.0 && self.l2_penalty.is_finite()) {
            return Err(Error::InvalidParameter("l2_penalty must be nonnegative".into()));
        }
        if self.kind == ModelKind::Logistic && self.iterations == 0 {
            return Err(Error::InvalidParameter("iterations must be at least 1".into()));
        }
        Ok(())
    }
}

#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + libm::exp(-z))
    } else {
        let e = libm::exp(z);
        e / (1.0 + e)
    }
}

/// `ln(1 + e^z)` without overflow.
#[inline]
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + libm::log1p(libm::exp(-z))
    } else {
        libm::log1p(libm::exp(z))
    }
}

/// Mean log-loss of logits against labels.
fn log_loss(logits: &[f64], y: &[u8]) -> f64 {
    logits
        .iter()
        .zip(y)
        .map(|(&z, &t)| softplus(z) - t as f64 * z)
        .sum::<f64>()
        / logits.len() as f64
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LogisticModel {
    /// One weight per encoded column, then the weight of `A`.
    pub weights: Vec<f64>,
    pub bias: f64,
    pub seed: u64,
    pub iterations_run: usize,
}

impl LogisticModel {
    fn logit(&self, features: &[f64], sensitive: u8) -> f64 {
        let d = self.weights.len() - 1;
        debug_assert_eq!(features.len(), d);
        let mut z = self.bias + self.weights[d] * sensitive as f64;
        for (w, x) in self.weights[..d].iter().zip(features) {
            z += w * x;
        }
        z
    }
}

/// Depth-one regression tree: `x[feature] < threshold ? left : right`.
/// `feature == n_features` addresses the sensitive attribute.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Stump {
    pub feature: usize,
    pub threshold: f64,
    pub left: f64,
    pub right: f64,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct StumpEnsemble {
    pub n_features: usize,
    pub base_score: f64,
    pub stumps: Vec<Stump>,
    pub seed: u64,
}

impl StumpEnsemble {
    fn logit(&self, features: &[f64], sensitive: u8) -> f64 {
        let mut z = self.base_score;
        for s in &self.stumps {
            let v = if s.feature == self.n_features {
                sensitive as f64
            } else {
                features[s.feature]
            };
            z += if v < s.threshold { s.left } else { s.right };
        }
        z
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Model {
    Logistic(LogisticModel),
    BoostedStumps(StumpEnsemble),
}

impl Model {
    pub fn kind(&self) -> ModelKind {
        match self {
            Model::Logistic(_) => ModelKind::Logistic,
            Model::BoostedStumps(_) => ModelKind::BoostedStumps,
        }
    }

    pub fn seed(&self) -> u64 {
        match self {
            Model::Logistic(m) => m.seed,
            Model::BoostedStumps(m) => m.seed,
        }
    }

    pub fn n_features(&self) -> usize {
        match self {
            Model::Logistic(m) => m.weights.len() - 1,
            Model::BoostedStumps(m) => m.n_features,
        }
    }

    pub fn logit(&self, features: &[f64], sensitive: u8) -> f64 {
        match self {
            Model::Logistic(m) => m.logit(features, sensitive),
            Model::BoostedStumps(m) => m.logit(features, sensitive),
        }
    }
}

impl Predictor for Model {
    fn predict_proba(&self, features: &[f64], sensitive: u8) -> f64 {
        sigmoid(self.logit(features, sensitive))
    }
}

fn check_training_inputs(x: &Matrix, sensitive: &[u8], y: &[u8]) -> Result<()> {
    if x.rows() != y.len() || x.rows() != sensitive.len() {
        return Err(Error::Dimension(format!(
            "{} rows, {} labels, {} sensitive values",
            x.rows(),
            y.len(),
            sensitive.len()
        )));
    }
    if !x.all_finite() {
        return Err(Error::NonFinite("training features".into()));
    }
    let positives = y.iter().filter(|&&t| t == 1).count();
    if positives == 0 || positives == y.len() {
        return Err(Error::Dataset("both classes present is violated".into()));
    }
    Ok(())
}

/// Regularized mean log-loss and its gradient for logistic parameters laid out
/// as `[w_0 .. w_{d-1}, w_A, bias]`.
pub fn logistic_objective(
    x: &Matrix,
    sensitive: &[u8],
    y: &[u8],
    params: &[f64],
    l2_penalty: f64,
) -> (f64, Vec<f64>) {
    let d = x.cols();
    let n = x.rows() as f64;
    let mut grad = alloc::vec![0.0; d + 2];
    let mut loss = 0.0;
    for i in 0..x.rows() {
        let row = x.row(i);
        let a = sensitive[i] as f64;
        let mut z = params[d + 1] + params[d] * a;
        for (w, v) in params[..d].iter().zip(row) {
            z += w * v;
        }
        let t = y[i] as f64;
        loss += softplus(z) - t * z;
        let r = sigmoid(z) - t;
        for (g, v) in grad[..d].iter_mut().zip(row) {
            *g += r * v;
        }
        grad[d] += r * a;
        grad[d + 1] += r;
    }
    loss /= n;
    for g in grad.iter_mut() {
        *g /= n;
    }
    let mut penalty = 0.0;
    for j in 0..=d {
        penalty += params[j] * params[j];
        grad[j] += l2_penalty * params[j];
    }
    (loss + 0.5 * l2_penalty * penalty, grad)
}

const GRADIENT_TOLERANCE: f64 = 1e-6;

/// Full-batch gradient descent on the L2-regularized log-loss, starting from
/// zero weights. Stops at gradient norm `1e-6` or after `cfg.iterations`.
pub fn train_logistic(x: &Matrix, sensitive: &[u8], y: &[u8], cfg: &TrainConfig) -> Result<Model> {
    cfg.validate()?;
    check_training_inputs(x, sensitive, y)?;
    let d = x.cols();
    let mut params = alloc::vec![0.0; d + 2];
    let mut iterations_run = 0;
    for iteration in 0..cfg.iterations {
        let (loss, grad) = logistic_objective(x, sensitive, y, &params, cfg.l2_penalty);
        if !loss.is_finite() {
            return Err(Error::TrainingDiverged { iteration });
        }
        let norm = libm::sqrt(grad.iter().map(|g| g * g).sum::<f64>());
        if norm < GRADIENT_TOLERANCE {
            break;
        }
        for (p, g) in params.iter_mut().zip(&grad) {
            *p -= cfg.learning_rate * g;
        }
        iterations_run = iteration + 1;
    }
    let bias = params.pop().expect("bias present");
    Ok(Model::Logistic(LogisticModel {
        weights: params,
        bias,
        seed: cfg.seed,
        iterations_run,
    }))
}

/// Minimum hessian mass per leaf.
const MIN_CHILD_WEIGHT: f64 = 1.0;

struct Candidate {
    feature: usize,
    threshold: f64,
    gain: f64,
    left: (f64, f64),
    right: (f64, f64),
}

/// Gradient boosting of depth-one trees on the log-loss with Newton leaf
/// values. A backtracking step keeps the training loss nonincreasing.
pub fn train_boosted_stumps(
    x: &Matrix,
    sensitive: &[u8],
    y: &[u8],
    cfg: &TrainConfig,
) -> Result<Model> {
    cfg.validate()?;
    check_training_inputs(x, sensitive, y)?;
    let n = x.rows();
    let d = x.cols();
    let lambda = cfg.l2_penalty;
    let value = |i: usize, j: usize| if j == d { sensitive[i] as f64 } else { x.get(i, j) };

    let rate = y.iter().filter(|&&t| t == 1).count() as f64 / n as f64;
    let base_score = libm::log(rate / (1.0 - rate));
    let mut logits = alloc::vec![base_score; n];

    let orders: Vec<Vec<usize>> = (0..=d)
        .map(|j| {
            let mut idx: Vec<usize> = (0..n).collect();
            idx.sort_by(|&a, &b| value(a, j).total_cmp(&value(b, j)).then(a.cmp(&b)));
            idx
        })
        .collect();

    let mut stumps = Vec::with_capacity(cfg.tree_count);
    let mut loss = log_loss(&logits, y);
    for round in 0..cfg.tree_count {
        let mut grad = alloc::vec![0.0; n];
        let mut hess = alloc::vec![0.0; n];
        for i in 0..n {
            let p = sigmoid(logits[i]);
            grad[i] = p - y[i] as f64;
            hess[i] = p * (1.0 - p);
        }
        let g_total: f64 = grad.iter().sum();
        let h_total: f64 = hess.iter().sum();
        let score = |g: f64, h: f64| g * g / (h + lambda);

        let mut best: Option<Candidate> = None;
        for (j, order) in orders.iter().enumerate() {
            let (mut gl, mut hl) = (0.0, 0.0);
            for w in 0..n - 1 {
                let i = order[w];
                gl += grad[i];
                hl += hess[i];
                let (lo, hi) = (value(i, j), value(order[w + 1], j));
                if lo == hi {
                    continue;
                }
                let (gr, hr) = (g_total - gl, h_total - hl);
                if hl < MIN_CHILD_WEIGHT || hr < MIN_CHILD_WEIGHT {
                    continue;
                }
                let gain = score(gl, hl) + score(gr, hr) - score(g_total, h_total);
                if best.as_ref().is_none_or(|b| gain > b.gain) {
                    best = Some(Candidate {
                        feature: j,
                        threshold: 0.5 * (lo + hi),
                        gain,
                        left: (gl, hl),
                        right: (gr, hr),
                    });
                }
            }
        }
        let Some(split) = best else { break };
        let leaf = |(g, h): (f64, f64)| -cfg.learning_rate * g / (h + lambda);
        let mut stump = Stump {
            feature: split.feature,
            threshold: split.threshold,
            left: leaf(split.left),
            right: leaf(split.right),
        };
        let mut accepted = false;
        for _ in 0..30 {
            let trial: Vec<f64> = (0..n)
                .map(|i| {
                    let v = value(i, stump.feature);
                    logits[i] + if v < stump.threshold { stump.left } else { stump.right }
                })
                .collect();
            let trial_loss = log_loss(&trial, y);
            if !trial_loss.is_finite() {
                return Err(Error::TrainingDiverged { iteration: round });
            }
            if trial_loss <= loss {
                logits = trial;
                loss = trial_loss;
                accepted = true;
                break;
            }
            stump.left *= 0.5;
            stump.right *= 0.5;
        }
        if !accepted {
            break;
        }
        stumps.push(stump);
    }
    Ok(Model::BoostedStumps(StumpEnsemble {
        n_features: d,
        base_score,
        stumps,
        seed: cfg.seed,
    }))
}

/// Training log-loss after each boosting round, starting with the base score.
pub fn boosting_loss_trace(model: &StumpEnsemble, x: &Matrix, sensitive: &[u8], y: &[u8]) -> Vec<f64> {
    let n = x.rows();
    let mut logits = alloc::vec![model.base_score; n];
    let mut trace = alloc::vec![log_loss(&logits, y)];
    for s in &model.stumps {
        for (i, z) in logits.iter_mut().enumerate() {
            let v = if s.feature == model.n_features {
                sensitive[i] as f64
            } else {
                x.get(i, s.feature)
            };
            *z += if v < s.threshold { s.left } else { s.right };
        }
        trace.push(log_loss(&logits, y));
    }
    trace
}

pub fn train(x: &Matrix, sensitive: &[u8], y: &[u8], cfg: &TrainConfig) -> Result<Model> {
    match cfg.kind {
        ModelKind::Logistic => train_logistic(x, sensitive, y, cfg),
        ModelKind::BoostedStumps => train_boosted_stumps(x, sensitive, y, cfg),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use rand::Rng;

    fn separable() -> (Matrix, Vec<u8>, Vec<u8>) {
        let mut r = rng::seeded(5);
        let mut rows = Vec::new();
        let mut y = Vec::new();
        let mut a = Vec::new();
        for i in 0..200 {
            let u: f64 = r.random_range(-1.0..1.0);
            let v: f64 = r.random_range(-1.0..1.0);
            // margin of 0.1 around u + v = 0
            if (u + v).abs() < 0.1 {
                continue;
            }
            rows.push([u, v]);
            y.push((u + v > 0.0) as u8);
            a.push((i % 2) as u8);
        }
        (Matrix::from_rows(&rows).unwrap(), a, y)
    }

    fn accuracy(m: &Model, x: &Matrix, a: &[u8], y: &[u8]) -> f64 {
        let hits = (0..x.rows())
            .filter(|&i| predict_label(m, x.row(i), a[i], 0.5) == y[i])
            .count();
        hits as f64 / x.rows() as f64
    }

    #[test]
    fn logistic_separates_linear_data() {
        let (x, a, y) = separable();
        let cfg = TrainConfig {
            iterations: 3000,
            learning_rate: 1.0,
            l2_penalty: 0.0,
            ..TrainConfig::default()
        };
        let m = train_logistic(&x, &a, &y, &cfg).unwrap();
        assert!(accuracy(&m, &x, &a, &y) >= 0.99);
        assert_eq!(m, train_logistic(&x, &a, &y, &cfg).unwrap());
    }

    #[test]
    fn constant_labels_rejected() {
        let x = Matrix::from_rows(&[[0.0], [1.0]]).unwrap();
        let err = train_logistic(&x, &[0, 1], &[1, 1], &TrainConfig::default()).unwrap_err();
        assert!(matches!(err, Error::Dataset(ref m) if m.contains("both classes present")));
    }

    #[test]
    fn logistic_gradient_matches_central_differences() {
        let mut r = rng::seeded(11);
        for _ in 0..5 {
            let rows: Vec<[f64; 3]> = (0..12)
                .map(|_| [r.random_range(-2.0..2.0), r.random_range(-2.0..2.0), r.random_range(-2.0..2.0)])
                .collect();
            let x = Matrix::from_rows(&rows).unwrap();
            let a: Vec<u8> = (0..12).map(|i| (i % 3 == 0) as u8).collect();
            let y: Vec<u8> = (0..12).map(|i| (i % 2) as u8).collect();
            let params: Vec<f64> = (0..5).map(|_| r.random_range(-1.0..1.0)).collect();
            let (_, grad) = logistic_objective(&x, &a, &y, &params, 0.1);
            for k in 0..params.len() {
                let h = 1e-5;
                let mut p = params.clone();
                p[k] += h;
                let up = logistic_objective(&x, &a, &y, &p, 0.1).0;
                p[k] -= 2.0 * h;
                let down = logistic_objective(&x, &a, &y, &p, 0.1).0;
                let fd = (up - down) / (2.0 * h);
                let rel = (fd - grad[k]).abs() / fd.abs().max(grad[k].abs()).max(1e-8);
                assert!(rel < 1e-5, "param {k}: analytic {} vs fd {fd}", grad[k]);
            }
        }
    }

    #[test]
    fn stumps_fit_threshold_data() {
        let mut r = rng::seeded(2);
        let rows: Vec<[f64; 2]> = (0..300)
            .map(|_| [r.random_range(-1.0..1.0), r.random_range(-1.0..1.0)])
            .collect();
        let x = Matrix::from_rows(&rows).unwrap();
        let y: Vec<u8> = rows.iter().map(|r| (r[0] > 0.2) as u8).collect();
        let a: Vec<u8> = (0..300).map(|i| (i % 2) as u8).collect();
        let cfg = TrainConfig {
            kind: ModelKind::BoostedStumps,
            tree_count: 50,
            learning_rate: 0.3,
            l2_penalty: 1.0,
            ..TrainConfig::default()
        };
        let m = train_boosted_stumps(&x, &a, &y, &cfg).unwrap();
        assert!(accuracy(&m, &x, &a, &y) >= 0.95);
        let Model::BoostedStumps(ens) = &m else { unreachable!() };
        let trace = boosting_loss_trace(ens, &x, &a, &y);
        assert!(trace.windows(2).all(|w| w[1] <= w[0]));
        for i in 0..x.rows() {
            let p = m.predict_proba(x.row(i), a[i]);
            assert!((0.0..=1.0).contains(&p));
        }
    }

    #[test]
    fn zero_trees_is_base_rate() {
        let x = Matrix::from_rows(&[[0.0], [1.0], [2.0], [3.0]]).unwrap();
        let y = [0, 1, 1, 1];
        let cfg = TrainConfig {
            kind: ModelKind::BoostedStumps,
            tree_count: 0,
            ..TrainConfig::default()
        };
        let m = train_boosted_stumps(&x, &[0, 0, 1, 1], &y, &cfg).unwrap();
        for i in 0..4 {
            assert!((m.predict_proba(x.row(i), 0) - 0.75).abs() < 1e-12);
        }
    }

    #[test]
    fn label_threshold_tie_goes_positive() {
        let p = |_: &[f64], _: u8| 0.5;
        assert_eq!(predict_label(&p, &[], 0, 0.5), 1);
        let p = |_: &[f64], _: u8| 0.7;
        assert_eq!(predict_label(&p, &[], 0, 0.5), 1);
        let p = |_: &[f64], _: u8| 0.49;
        assert_eq!(predict_label(&p, &[], 0, 0.5), 0);
    }
}
