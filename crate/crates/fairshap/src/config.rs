//! Experiment configuration: sectioned INI files, also accepted as the JSON
//! `config` block embedded in a report.

use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use ini::{Ini, Properties};
use serde::{Deserialize, Serialize};

use fairshap_core::baselines::BaselineMethod;
use fairshap_core::dataset::{FeatureSchema, FeatureSpec};
use fairshap_core::fairness::DrScale;
use fairshap_core::fairshap::{FairshapConfig, Matcher, ThresholdMode};
use fairshap_core::matching::SinkhornParams;
use fairshap_core::model::{ModelKind, TrainConfig};
use fairshap_core::shapley::{EstimatorConfig, EstimatorMode};

use crate::error::{HarnessError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    None,
    Fairshap,
    CorrelationRemover,
    DisparateImpactRemover,
    AblationRandom,
    AblationMatchRandom,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::None,
        Method::Fairshap,
        Method::CorrelationRemover,
        Method::DisparateImpactRemover,
        Method::AblationRandom,
        Method::AblationMatchRandom,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::None => "none",
            Method::Fairshap => "fairshap",
            Method::CorrelationRemover => "correlation_remover",
            Method::DisparateImpactRemover => "disparate_impact_remover",
            Method::AblationRandom => "ablation_random",
            Method::AblationMatchRandom => "ablation_match_random",
        }
    }

    pub fn baseline(self) -> Option<BaselineMethod> {
        match self {
            Method::None => Some(BaselineMethod::None),
            Method::Fairshap => None,
            Method::CorrelationRemover => Some(BaselineMethod::CorrelationRemover),
            Method::DisparateImpactRemover => Some(BaselineMethod::DisparateImpactRemover),
            Method::AblationRandom => Some(BaselineMethod::AblationRandom),
            Method::AblationMatchRandom => Some(BaselineMethod::AblationMatchRandom),
        }
    }

    /// Whether test rows pass through the method's transform.
    pub fn test_adjustment_necessity(self) -> bool {
        self.baseline().is_some_and(BaselineMethod::test_adjustment_necessity)
    }

    /// Whether the method needs the fold's FairSHAP log.
    pub fn needs_fairshap(self) -> bool {
        matches!(self, Method::Fairshap | Method::AblationRandom | Method::AblationMatchRandom)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| format!("unknown method `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetConfig {
    pub path: PathBuf,
    pub schema: FeatureSchema,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub enabled: bool,
    pub n_points: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            enabled: false,
            n_points: 11,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaselineParams {
    pub alpha: f64,
    pub repair_level: f64,
    /// Fixed ablation draw count; otherwise the fold's FairSHAP log length.
    pub n_modifications: Option<usize>,
    /// The correlation remover also withholds `A` from the retrained model.
    pub drop_sensitive: bool,
}

impl Default for BaselineParams {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            repair_level: 1.0,
            n_modifications: None,
            drop_sensitive: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub dataset: DatasetConfig,
    pub model: TrainConfig,
    pub fairshap: FairshapConfig,
    pub methods: Vec<Method>,
    pub folds: usize,
    pub sweep: SweepConfig,
    pub baselines: BaselineParams,
    pub output: PathBuf,
    pub seed: u64,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.methods.is_empty() {
            return Err(HarnessError::Invalid("methods list is empty".into()));
        }
        if self.folds < 2 {
            return Err(HarnessError::Invalid(format!("folds = {} must be at least 2", self.folds)));
        }
        if self.sweep.enabled && self.sweep.n_points < 2 {
            return Err(HarnessError::Invalid("sweep n_points must be at least 2".into()));
        }
        for (name, v) in [("alpha", self.baselines.alpha), ("repair_level", self.baselines.repair_level)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(HarnessError::Invalid(format!("{name} must lie in [0, 1], got {v}")));
            }
        }
        self.model.validate()?;
        self.fairshap.validate()?;
        self.dataset.schema.validate()?;
        Ok(())
    }

    /// Replaces the global seed and every seed derived from it.
    pub fn set_seed(&mut self, seed: u64) {
        self.seed = seed;
        self.model.seed = seed;
        self.fairshap.estimator.seed = seed;
    }

    /// Loads an INI file, or a JSON report/config when the extension is `.json`.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let mut cfg = if path.extension().is_some_and(|e| e == "json") {
            from_json(&text).map_err(|message| HarnessError::Config {
                path: path.to_path_buf(),
                message,
            })?
        } else {
            let ini = Ini::load_from_str(&text).map_err(|e| HarnessError::Config {
                path: path.to_path_buf(),
                message: e.to_string(),
            })?;
            from_ini(&ini).map_err(|message| HarnessError::Config {
                path: path.to_path_buf(),
                message,
            })?
        };
        if cfg.dataset.path.is_relative() {
            cfg.dataset.path = base.join(&cfg.dataset.path);
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn from_json(text: &str) -> std::result::Result<ExperimentConfig, String> {
    let value: serde_json::Value = serde_json::from_str(text).map_err(|e| e.to_string())?;
    let config = value.get("config").cloned().unwrap_or(value);
    serde_json::from_value(config).map_err(|e| e.to_string())
}

struct Section<'a> {
    name: &'static str,
    props: Option<&'a Properties>,
}

impl<'a> Section<'a> {
    fn new(ini: &'a Ini, name: &'static str) -> Self {
        Self {
            name,
            props: ini.section(Some(name)),
        }
    }

    fn raw(&self, key: &str) -> Option<&'a str> {
        self.props.and_then(|p| p.get(key)).map(str::trim)
    }

    fn required(&self, key: &str) -> std::result::Result<&'a str, String> {
        self.raw(key)
            .ok_or_else(|| format!("[{}] is missing `{key}`", self.name))
    }

    fn parse<T: FromStr>(&self, key: &str) -> std::result::Result<Option<T>, String>
    where
        T::Err: fmt::Display,
    {
        match self.raw(key) {
            None | Some("") => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|e| format!("[{}] {key} = `{v}`: {e}", self.name)),
        }
    }

    fn or<T: FromStr>(&self, key: &str, default: T) -> std::result::Result<T, String>
    where
        T::Err: fmt::Display,
    {
        Ok(self.parse(key)?.unwrap_or(default))
    }

    fn list(&self, key: &str) -> Vec<String> {
        self.raw(key)
            .map(|v| {
                v.split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(str::to_owned)
                    .collect()
            })
            .unwrap_or_default()
    }

    fn check_keys(&self, known: &[&str]) -> std::result::Result<(), String> {
        if let Some(p) = self.props {
            if let Some((k, _)) = p.iter().find(|(k, _)| !known.contains(k)) {
                return Err(format!("[{}] has unknown key `{k}`", self.name));
            }
        }
        Ok(())
    }
}

fn choice<T: Copy>(section: &Section, key: &str, options: &[(&str, T)], default: T) -> std::result::Result<T, String> {
    match section.raw(key) {
        None | Some("") => Ok(default),
        Some(v) => options
            .iter()
            .find(|(name, _)| *name == v)
            .map(|(_, t)| *t)
            .ok_or_else(|| {
                let names: Vec<&str> = options.iter().map(|(n, _)| *n).collect();
                format!("[{}] {key} = `{v}`: expected one of {}", section.name, names.join(", "))
            }),
    }
}

pub fn from_ini(ini: &Ini) -> std::result::Result<ExperimentConfig, String> {
    const SECTIONS: [&str; 6] = ["dataset", "model", "fairshap", "experiment", "sweep", "baselines"];
    for (name, _) in ini.iter() {
        if let Some(n) = name {
            if !SECTIONS.contains(&n) {
                return Err(format!("unknown section [{n}]"));
            }
        }
    }

    let ds = Section::new(ini, "dataset");
    ds.check_keys(&[
        "path",
        "numeric",
        "categorical",
        "ignored",
        "label",
        "label_positive",
        "sensitive",
        "sensitive_positive",
    ])?;
    let mut features: Vec<FeatureSpec> = Vec::new();
    let numeric = ds.list("numeric");
    let categorical = ds.list("categorical");
    // declaration order: numeric block first, then categorical
    features.extend(numeric.iter().map(|n| FeatureSpec::numeric(n)));
    features.extend(categorical.iter().map(|n| FeatureSpec::categorical(n)));
    let set = |v: Vec<String>| v.into_iter().collect::<BTreeSet<_>>();
    let schema = FeatureSchema {
        features,
        label_name: ds.required("label")?.to_owned(),
        label_positive_values: set(ds.list("label_positive")),
        sensitive_name: ds.required("sensitive")?.to_owned(),
        sensitive_positive_values: set(ds.list("sensitive_positive")),
        ignored: ds.list("ignored"),
    };
    let dataset = DatasetConfig {
        path: PathBuf::from(ds.required("path")?),
        schema,
    };

    let ex = Section::new(ini, "experiment");
    ex.check_keys(&["methods", "folds", "seed", "output"])?;
    let seed: u64 = ex.or("seed", 0)?;
    let methods = ex
        .list("methods")
        .iter()
        .map(|m| m.parse::<Method>())
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| format!("[experiment] methods: {e}"))?;
    let methods = if methods.is_empty() { vec![Method::None, Method::Fairshap] } else { methods };

    let m = Section::new(ini, "model");
    m.check_keys(&["kind", "learning_rate", "iterations", "l2_penalty", "tree_count", "seed"])?;
    let d = TrainConfig::default();
    let model = TrainConfig {
        kind: choice(
            &m,
            "kind",
            &[("logistic", ModelKind::Logistic), ("boosted_stumps", ModelKind::BoostedStumps)],
            d.kind,
        )?,
        learning_rate: m.or("learning_rate", d.learning_rate)?,
        iterations: m.or("iterations", d.iterations)?,
        l2_penalty: m.or("l2_penalty", d.l2_penalty)?,
        tree_count: m.or("tree_count", d.tree_count)?,
        seed: m.or("seed", seed)?,
    };

    let f = Section::new(ini, "fairshap");
    f.check_keys(&[
        "threshold",
        "threshold_mode",
        "matcher",
        "sinkhorn_epsilon",
        "sinkhorn_max_iters",
        "sinkhorn_tol",
        "estimator",
        "max_exact_players",
        "permutations",
        "estimator_seed",
        "dr_scale",
        "label_threshold",
    ])?;
    let fd = FairshapConfig::default();
    let sd = SinkhornParams::default();
    let sinkhorn = SinkhornParams {
        epsilon: f.or("sinkhorn_epsilon", sd.epsilon)?,
        max_iters: f.or("sinkhorn_max_iters", sd.max_iters)?,
        tol: f.or("sinkhorn_tol", sd.tol)?,
    };
    let matcher = match f.raw("matcher").unwrap_or("nearest_neighbour") {
        "nearest_neighbour" | "" => Matcher::NearestNeighbour,
        "optimal_transport" => Matcher::OptimalTransport(sinkhorn),
        other => {
            return Err(format!(
                "[fairshap] matcher = `{other}`: expected nearest_neighbour or optimal_transport"
            ))
        }
    };
    let ed = EstimatorConfig::default();
    let estimator = EstimatorConfig {
        mode: choice(
            &f,
            "estimator",
            &[
                ("auto", EstimatorMode::Auto),
                ("exact", EstimatorMode::Exact),
                ("permutation", EstimatorMode::Permutation),
            ],
            ed.mode,
        )?,
        max_exact_players: f.or("max_exact_players", ed.max_exact_players)?,
        permutations: f.or("permutations", ed.permutations)?,
        seed: f.or("estimator_seed", seed)?,
    };
    let scale = match f.raw("dr_scale").unwrap_or("probability") {
        "probability" | "" => DrScale::Probability,
        "label" => DrScale::Label {
            threshold: f.or("label_threshold", 0.5)?,
        },
        other => return Err(format!("[fairshap] dr_scale = `{other}`: expected probability or label")),
    };
    let fairshap = FairshapConfig {
        threshold: f.or("threshold", fd.threshold)?,
        threshold_mode: choice(
            &f,
            "threshold_mode",
            &[("signed", ThresholdMode::Signed), ("absolute", ThresholdMode::Absolute)],
            fd.threshold_mode,
        )?,
        matcher,
        estimator,
        scale,
    };

    let sw = Section::new(ini, "sweep");
    sw.check_keys(&["enabled", "n_points"])?;
    let sdef = SweepConfig::default();
    let sweep = SweepConfig {
        enabled: sw.or("enabled", sdef.enabled)?,
        n_points: sw.or("n_points", sdef.n_points)?,
    };

    let b = Section::new(ini, "baselines");
    b.check_keys(&["alpha", "repair_level", "n_modifications", "drop_sensitive"])?;
    let bd = BaselineParams::default();
    let baselines = BaselineParams {
        alpha: b.or("alpha", bd.alpha)?,
        repair_level: b.or("repair_level", bd.repair_level)?,
        n_modifications: b.parse("n_modifications")?,
        drop_sensitive: b.or("drop_sensitive", bd.drop_sensitive)?,
    };

    Ok(ExperimentConfig {
        dataset,
        model,
        fairshap,
        methods,
        folds: ex.or("folds", 5)?,
        sweep,
        baselines,
        output: PathBuf::from(ex.raw("output").unwrap_or("fairshap-out")),
        seed,
    })
}
