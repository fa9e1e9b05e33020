//! Flat `key = value` text for fitted models and test-time transforms.
//! Floats are written as their IEEE-754 bit patterns in hex, so a load
//! reproduces every value exactly.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use fairshap_core::baselines::{CorrelationRemover, DisparateImpactRemover};
use fairshap_core::model::{LogisticModel, Model, ModelKind, Stump, StumpEnsemble, TrainConfig};

use crate::error::{HarnessError, Result};

fn hex(v: f64) -> String {
    format!("{:016x}", v.to_bits())
}

fn hex_list(values: &[f64]) -> String {
    values.iter().map(|&v| hex(v)).collect::<Vec<_>>().join(",")
}

fn bad(msg: impl Into<String>) -> HarnessError {
    HarnessError::Invalid(msg.into())
}

struct Fields(BTreeMap<String, String>);

impl Fields {
    fn parse(text: &str) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| bad(format!("line {}: expected key = value", n + 1)))?;
            if map.insert(k.trim().to_string(), v.trim().to_string()).is_some() {
                return Err(bad(format!("line {}: duplicate key {}", n + 1, k.trim())));
            }
        }
        Ok(Self(map))
    }

    fn str(&self, key: &str) -> Result<&str> {
        self.0.get(key).map(String::as_str).ok_or_else(|| bad(format!("missing key {key}")))
    }

    fn uint<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        self.str(key)?.parse().map_err(|_| bad(format!("{key}: not an integer")))
    }

    fn float(&self, key: &str) -> Result<f64> {
        parse_hex(self.str(key)?).ok_or_else(|| bad(format!("{key}: not a hex float")))
    }

    fn floats(&self, key: &str) -> Result<Vec<f64>> {
        let s = self.str(key)?;
        if s.is_empty() {
            return Ok(Vec::new());
        }
        s.split(',')
            .map(|t| parse_hex(t.trim()).ok_or_else(|| bad(format!("{key}: not a hex float list"))))
            .collect()
    }

    fn flag(&self, key: &str) -> Result<bool> {
        self.str(key)?.parse().map_err(|_| bad(format!("{key}: expected true or false")))
    }
}

fn parse_hex(s: &str) -> Option<f64> {
    u64::from_str_radix(s, 16).ok().map(f64::from_bits)
}

fn kind_name(kind: ModelKind) -> &'static str {
    match kind {
        ModelKind::Logistic => "logistic",
        ModelKind::BoostedStumps => "boosted_stumps",
    }
}

/// Writes the model together with the configuration that trained it.
pub fn encode_model(model: &Model, cfg: &TrainConfig) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "kind = {}", kind_name(model.kind()));
    let _ = writeln!(s, "learning_rate = {}", hex(cfg.learning_rate));
    let _ = writeln!(s, "iterations = {}", cfg.iterations);
    let _ = writeln!(s, "l2_penalty = {}", hex(cfg.l2_penalty));
    let _ = writeln!(s, "tree_count = {}", cfg.tree_count);
    let _ = writeln!(s, "seed = {}", cfg.seed);
    match model {
        Model::Logistic(m) => {
            let _ = writeln!(s, "model_seed = {}", m.seed);
            let _ = writeln!(s, "iterations_run = {}", m.iterations_run);
            let _ = writeln!(s, "bias = {}", hex(m.bias));
            let _ = writeln!(s, "weights = {}", hex_list(&m.weights));
        }
        Model::BoostedStumps(m) => {
            let _ = writeln!(s, "model_seed = {}", m.seed);
            let _ = writeln!(s, "n_features = {}", m.n_features);
            let _ = writeln!(s, "base_score = {}", hex(m.base_score));
            let _ = writeln!(s, "stumps = {}", m.stumps.len());
            for (i, t) in m.stumps.iter().enumerate() {
                let _ = writeln!(
                    s,
                    "stump.{i} = {},{},{},{}",
                    t.feature,
                    hex(t.threshold),
                    hex(t.left),
                    hex(t.right)
                );
            }
        }
    }
    s
}

pub fn decode_model(text: &str) -> Result<(Model, TrainConfig)> {
    let f = Fields::parse(text)?;
    let kind = match f.str("kind")? {
        "logistic" => ModelKind::Logistic,
        "boosted_stumps" => ModelKind::BoostedStumps,
        other => return Err(bad(format!("unknown model kind {other}"))),
    };
    let cfg = TrainConfig {
        kind,
        learning_rate: f.float("learning_rate")?,
        iterations: f.uint("iterations")?,
        l2_penalty: f.float("l2_penalty")?,
        tree_count: f.uint("tree_count")?,
        seed: f.uint("seed")?,
    };
    let model = match kind {
        ModelKind::Logistic => {
            let weights = f.floats("weights")?;
            if weights.is_empty() {
                return Err(bad("weights: empty"));
            }
            Model::Logistic(LogisticModel {
                weights,
                bias: f.float("bias")?,
                seed: f.uint("model_seed")?,
                iterations_run: f.uint("iterations_run")?,
            })
        }
        ModelKind::BoostedStumps => {
            let n_features: usize = f.uint("n_features")?;
            let count: usize = f.uint("stumps")?;
            let mut stumps = Vec::with_capacity(count);
            for i in 0..count {
                let key = format!("stump.{i}");
                let parts: Vec<&str> = f.str(&key)?.split(',').map(str::trim).collect();
                let [feature, threshold, left, right] = parts[..] else {
                    return Err(bad(format!("{key}: expected four fields")));
                };
                let feature: usize = feature.parse().map_err(|_| bad(format!("{key}: bad feature")))?;
                if feature > n_features {
                    return Err(bad(format!("{key}: feature {feature} out of range")));
                }
                let float = |t: &str| parse_hex(t).ok_or_else(|| bad(format!("{key}: bad hex float")));
                stumps.push(Stump {
                    feature,
                    threshold: float(threshold)?,
                    left: float(left)?,
                    right: float(right)?,
                });
            }
            Model::BoostedStumps(StumpEnsemble {
                n_features,
                base_score: f.float("base_score")?,
                stumps,
                seed: f.uint("model_seed")?,
            })
        }
    };
    Ok((model, cfg))
}

pub fn encode_correlation_remover(cr: &CorrelationRemover) -> String {
    let mut s = String::from("kind = correlation_remover\n");
    let _ = writeln!(s, "alpha = {}", hex(cr.alpha));
    let _ = writeln!(s, "sensitive_mean = {}", hex(cr.sensitive_mean));
    let _ = writeln!(s, "drop_sensitive = {}", cr.drop_sensitive);
    let _ = writeln!(s, "coefficients = {}", hex_list(&cr.coefficients));
    s
}

pub fn decode_correlation_remover(text: &str) -> Result<CorrelationRemover> {
    let f = Fields::parse(text)?;
    if f.str("kind")? != "correlation_remover" {
        return Err(bad("kind: expected correlation_remover"));
    }
    Ok(CorrelationRemover {
        alpha: f.float("alpha")?,
        sensitive_mean: f.float("sensitive_mean")?,
        coefficients: f.floats("coefficients")?,
        drop_sensitive: f.flag("drop_sensitive")?,
    })
}

pub fn encode_disparate_impact_remover(dir: &DisparateImpactRemover) -> String {
    let mut s = String::from("kind = disparate_impact_remover\n");
    let _ = writeln!(s, "repair_level = {}", hex(dir.repair_level));
    let cols: Vec<String> = dir.columns.iter().map(usize::to_string).collect();
    let _ = writeln!(s, "columns = {}", cols.join(","));
    for (c, [g0, g1]) in dir.sorted.iter().enumerate() {
        let _ = writeln!(s, "sorted.{c}.0 = {}", hex_list(g0));
        let _ = writeln!(s, "sorted.{c}.1 = {}", hex_list(g1));
    }
    s
}

pub fn decode_disparate_impact_remover(text: &str) -> Result<DisparateImpactRemover> {
    let f = Fields::parse(text)?;
    if f.str("kind")? != "disparate_impact_remover" {
        return Err(bad("kind: expected disparate_impact_remover"));
    }
    let cols = f.str("columns")?;
    let columns: Vec<usize> = if cols.is_empty() {
        Vec::new()
    } else {
        cols.split(',')
            .map(|t| t.trim().parse().map_err(|_| bad("columns: not an integer list")))
            .collect::<Result<_>>()?
    };
    let sorted = (0..columns.len())
        .map(|c| Ok([f.floats(&format!("sorted.{c}.0"))?, f.floats(&format!("sorted.{c}.1"))?]))
        .collect::<Result<Vec<_>>>()?;
    Ok(DisparateImpactRemover {
        repair_level: f.float("repair_level")?,
        columns,
        sorted,
    })
}
