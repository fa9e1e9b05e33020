//! k-fold experiments: per fold, fit the encoder and baseline model on the
//! training rows, transform the training rows with each method, retrain with
//! the same configuration and seed, and evaluate on the held-out rows.

use std::collections::BTreeMap;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use fairshap_core::baselines::{
    ablation_match_random, ablation_random, CorrelationRemover, DisparateImpactRemover,
    SensitiveBlind,
};
use fairshap_core::dataset::{kfold_split, FeatureEncoding, FeatureLayout, Fold, PlayerMap, Stratification, TabularDataset};
use fairshap_core::fairness::{
    data_fidelity, dr_dataset, evaluate, training_adjustment_rate, FairnessReport,
};
use fairshap_core::fairshap::{
    fairshap_augment, modification_sweep, theorem_c2_diagnostic, Augmented, FoldData, SweepPoint,
};
use fairshap_core::model::{train, Model};
use fairshap_core::rng::derive_seed;
use fairshap_core::verify::GapStats;
use fairshap_core::Matrix;

use crate::config::{ExperimentConfig, Method};
use crate::csv_io::load_dataset;
use crate::error::Result;

/// Encoded rows and baseline model of one fold.
pub struct FoldContext {
    pub index: usize,
    pub fold: Fold,
    pub layout: FeatureLayout,
    pub players: PlayerMap,
    pub x_train: Matrix,
    pub a_train: Vec<u8>,
    pub y_train: Vec<u8>,
    pub x_test: Matrix,
    pub a_test: Vec<u8>,
    pub y_test: Vec<u8>,
    pub model: Model,
}

impl FoldContext {
    pub fn prepare(dataset: &TabularDataset, index: usize, fold: &Fold, cfg: &ExperimentConfig) -> Result<Self> {
        let layout = FeatureLayout::fit(dataset, &fold.train)?;
        let pick = |idx: &[usize]| -> Result<(Matrix, Vec<u8>, Vec<u8>)> {
            let rows: Vec<_> = idx.iter().map(|&i| dataset.rows()[i].clone()).collect();
            let (x, _) = layout.transform_rows(&rows)?;
            let a = idx.iter().map(|&i| dataset.sensitive()[i]).collect();
            let y = idx.iter().map(|&i| dataset.labels()[i]).collect();
            Ok((x, a, y))
        };
        let (x_train, a_train, y_train) = pick(&fold.train)?;
        let (x_test, a_test, y_test) = pick(&fold.test)?;
        let model = train(&x_train, &a_train, &y_train, &cfg.model)?;
        Ok(Self {
            index,
            fold: fold.clone(),
            players: layout.players(),
            layout,
            x_train,
            a_train,
            y_train,
            x_test,
            a_test,
            y_test,
            model,
        })
    }

    pub fn data(&self) -> FoldData<'_> {
        FoldData {
            x_train: &self.x_train,
            a_train: &self.a_train,
            y_train: &self.y_train,
            x_test: &self.x_test,
            a_test: &self.a_test,
            y_test: &self.y_test,
        }
    }

    pub fn augment(&self, cfg: &ExperimentConfig) -> Result<Augmented> {
        Ok(fairshap_augment(
            &self.x_train,
            &self.a_train,
            &self.model,
            &self.players,
            &cfg.fairshap,
        )?)
    }

    pub fn numeric_columns(&self) -> Vec<usize> {
        self.layout
            .features
            .iter()
            .filter(|f| matches!(f.encoding, FeatureEncoding::Numeric { .. }))
            .map(|f| f.start)
            .collect()
    }
}

/// FNV-1a over the bit patterns of a matrix.
pub fn checksum(m: &Matrix) -> String {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for v in m.as_slice() {
        for b in v.to_bits().to_le_bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }
    format!("{h:016x}")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodFold {
    pub fold: usize,
    pub report: Option<FairnessReport>,
    pub error: Option<String>,
    /// Changed raw cells (FairSHAP log length or effective ablation changes).
    pub modifications: Option<usize>,
    /// FairSHAP cells meeting the threshold, including no-op replacements.
    pub selected_cells: Option<usize>,
    /// Ablation draws.
    pub attempted: Option<usize>,
    pub test_checksum_before: String,
    pub test_checksum_after: String,
}

impl MethodFold {
    pub fn test_rows_unchanged(&self) -> bool {
        self.test_checksum_before == self.test_checksum_after
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub mean: Option<f64>,
    /// Sample standard deviation (n - 1); absent with fewer than two folds.
    pub sd: Option<f64>,
    pub n: usize,
    pub missing: usize,
}

pub fn aggregate(values: &[Option<f64>]) -> Aggregate {
    let present: Vec<f64> = values.iter().flatten().copied().collect();
    let n = present.len();
    let mean = (n > 0).then(|| present.iter().sum::<f64>() / n as f64);
    let sd = mean.filter(|_| n > 1).map(|m| {
        (present.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1) as f64).sqrt()
    });
    Aggregate {
        mean,
        sd,
        n,
        missing: values.len() - n,
    }
}

pub const METRICS: [&str; 8] = [
    "accuracy",
    "dr",
    "dp",
    "eo",
    "pqp",
    "dr_train",
    "data_fidelity",
    "training_adjustment_rate",
];

pub fn metric(r: &FairnessReport, name: &str) -> Option<f64> {
    match name {
        "accuracy" => Some(r.accuracy),
        "dr" => Some(r.dr),
        "dp" => Some(r.dp),
        "eo" => r.eo,
        "pqp" => r.pqp,
        "dr_train" => r.dr_train,
        "data_fidelity" => r.data_fidelity,
        "training_adjustment_rate" => r.training_adjustment_rate,
        _ => None,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodResult {
    pub method: Method,
    pub test_adjustment_necessity: bool,
    pub folds: Vec<MethodFold>,
    pub aggregate: BTreeMap<String, Aggregate>,
    pub modifications: Aggregate,
}

impl MethodResult {
    fn new(method: Method, folds: Vec<MethodFold>) -> Self {
        let metrics: BTreeMap<String, Aggregate> = METRICS
            .iter()
            .map(|&name| {
                let values: Vec<Option<f64>> = folds
                    .iter()
                    .map(|f| f.report.as_ref().and_then(|r| metric(r, name)))
                    .collect();
                (name.to_string(), aggregate(&values))
            })
            .collect();
        let mods: Vec<Option<f64>> = folds.iter().map(|f| f.modifications.map(|m| m as f64)).collect();
        Self {
            method,
            test_adjustment_necessity: method.test_adjustment_necessity(),
            modifications: aggregate(&mods),
            folds,
            aggregate: metrics,
        }
    }

    pub fn mean(&self, name: &str) -> Option<f64> {
        self.aggregate.get(name).and_then(|a| a.mean)
    }

    pub fn sd(&self, name: &str) -> Option<f64> {
        self.aggregate.get(name).and_then(|a| a.sd)
    }
}

/// Partial-replacement gap statistics of one fold, both directions pooled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldDiagnostic {
    pub fold: usize,
    pub stats: GapStats,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanSweepPoint {
    pub point: usize,
    pub folds: usize,
    pub n_modifications: f64,
    pub accuracy: f64,
    pub dr: f64,
    pub dp: f64,
    pub eo: Option<f64>,
    pub pqp: Option<f64>,
    pub dr_reduction_pct: f64,
    pub dr_reduction_pct_sd: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub folds: Vec<Vec<SweepPoint>>,
    pub mean: Vec<MeanSweepPoint>,
}

pub fn mean_curve(folds: &[Vec<SweepPoint>]) -> Vec<MeanSweepPoint> {
    let len = folds.iter().map(Vec::len).max().unwrap_or(0);
    (0..len)
        .map(|p| {
            let pts: Vec<&SweepPoint> = folds.iter().filter_map(|f| f.get(p)).collect();
            let mean = |g: &dyn Fn(&SweepPoint) -> Option<f64>| {
                aggregate(&pts.iter().map(|s| g(s)).collect::<Vec<_>>()).mean
            };
            let reduction = aggregate(&pts.iter().map(|s| Some(s.dr_reduction_pct)).collect::<Vec<_>>());
            MeanSweepPoint {
                point: p,
                folds: pts.len(),
                n_modifications: mean(&|s| Some(s.n_modifications as f64)).unwrap_or(0.0),
                accuracy: mean(&|s| Some(s.report.accuracy)).unwrap_or(f64::NAN),
                dr: mean(&|s| Some(s.report.dr)).unwrap_or(f64::NAN),
                dp: mean(&|s| Some(s.report.dp)).unwrap_or(f64::NAN),
                eo: mean(&|s| s.report.eo),
                pqp: mean(&|s| s.report.pqp),
                dr_reduction_pct: reduction.mean.unwrap_or(0.0),
                dr_reduction_pct_sd: reduction.sd,
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolInfo {
    pub name: String,
    pub version: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub total_seconds: f64,
    pub fold_seconds: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldFailure {
    pub fold: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub tool: ToolInfo,
    pub config: ExperimentConfig,
    pub rows: usize,
    pub group_sizes: [usize; 2],
    pub stratification: Stratification,
    /// Ordering used to turn the modification log into sweep prefixes.
    pub sweep_ordering: String,
    pub methods: Vec<MethodResult>,
    pub sweep: Option<SweepResult>,
    pub diagnostics: Vec<FoldDiagnostic>,
    pub failures: Vec<FoldFailure>,
    pub timing: Timing,
}

impl ExperimentReport {
    pub fn method(&self, m: Method) -> Option<&MethodResult> {
        self.methods.iter().find(|r| r.method == m)
    }

    pub fn succeeded(&self) -> bool {
        self.failures.is_empty() && self.methods.iter().all(|m| m.folds.iter().all(|f| f.error.is_none()))
    }

    /// JSON without the timing section, for reproducibility comparisons.
    pub fn without_timing(&self) -> serde_json::Value {
        let mut v = serde_json::to_value(self).expect("report serializes");
        if let Some(o) = v.as_object_mut() {
            o.remove("timing");
        }
        v
    }
}

pub fn tool_info() -> ToolInfo {
    ToolInfo {
        name: env!("CARGO_PKG_NAME").to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
    }
}

struct Transformed {
    train: Matrix,
    test: Option<Matrix>,
    modifications: Option<usize>,
    selected: Option<usize>,
    attempted: Option<usize>,
    blind: bool,
}

fn transform(
    ctx: &FoldContext,
    method: Method,
    augmented: Option<&Augmented>,
    cfg: &ExperimentConfig,
) -> Result<Transformed> {
    let plain = |train: Matrix| Transformed {
        train,
        test: None,
        modifications: None,
        selected: None,
        attempted: None,
        blind: false,
    };
    let ablation_n = || {
        cfg.baselines
            .n_modifications
            .unwrap_or_else(|| augmented.map(|a| a.log.len()).unwrap_or(0))
    };
    let ablation_seed = derive_seed(cfg.seed, 1 << 32 | ctx.index as u64);
    Ok(match method {
        Method::None => plain(ctx.x_train.clone()),
        Method::Fairshap => {
            let a = augmented.expect("fairshap log computed");
            Transformed {
                modifications: Some(a.log.len()),
                selected: Some(a.log.selected),
                ..plain(a.data.clone())
            }
        }
        Method::CorrelationRemover => {
            let mut cr = CorrelationRemover::fit(&ctx.x_train, &ctx.a_train, cfg.baselines.alpha)?;
            cr.drop_sensitive = cfg.baselines.drop_sensitive;
            Transformed {
                test: Some(cr.transform(&ctx.x_test, &ctx.a_test)?),
                blind: cr.drop_sensitive,
                ..plain(cr.transform(&ctx.x_train, &ctx.a_train)?)
            }
        }
        Method::DisparateImpactRemover => {
            let dir = DisparateImpactRemover::fit(
                &ctx.x_train,
                &ctx.a_train,
                &ctx.numeric_columns(),
                cfg.baselines.repair_level,
            )?;
            Transformed {
                test: Some(dir.transform(&ctx.x_test, &ctx.a_test)?),
                ..plain(dir.transform(&ctx.x_train, &ctx.a_train)?)
            }
        }
        Method::AblationRandom => {
            let n = ablation_n();
            let out = ablation_random(&ctx.x_train, &ctx.players, n, ablation_seed)?;
            Transformed {
                modifications: Some(out.effective),
                attempted: Some(n),
                ..plain(out.data)
            }
        }
        Method::AblationMatchRandom => {
            let n = ablation_n();
            let out = ablation_match_random(&ctx.x_train, &ctx.a_train, &ctx.players, n, ablation_seed)?;
            Transformed {
                modifications: Some(out.effective),
                attempted: Some(n),
                ..plain(out.data)
            }
        }
    })
}

/// Applies `method`, retrains, and evaluates on the (possibly transformed)
/// test rows. `dr_train` is measured on the training rows as the retrained
/// model sees them at inference: transformed for methods that transform test
/// rows, original otherwise.
pub fn run_method(
    ctx: &FoldContext,
    method: Method,
    augmented: Option<&Augmented>,
    cfg: &ExperimentConfig,
) -> MethodFold {
    let before = checksum(&ctx.x_test);
    let mut out = MethodFold {
        fold: ctx.index,
        report: None,
        error: None,
        modifications: None,
        selected_cells: None,
        attempted: None,
        test_checksum_before: before.clone(),
        test_checksum_after: before,
    };
    let result = (|| -> Result<FairnessReport> {
        let t = transform(ctx, method, augmented, cfg)?;
        out.modifications = t.modifications;
        out.selected_cells = t.selected;
        out.attempted = t.attempted;
        let test = t.test.as_ref().unwrap_or(&ctx.x_test);
        out.test_checksum_after = checksum(test);
        let scale = cfg.fairshap.scale;
        let train_view = if t.test.is_some() { &t.train } else { &ctx.x_train };
        let mut report = if t.blind {
            let zeros = vec![0; ctx.a_train.len()];
            let model = SensitiveBlind(train(&t.train, &zeros, &ctx.y_train, &cfg.model)?);
            let mut r = evaluate(&model, test, &ctx.a_test, &ctx.y_test, scale)?;
            r.dr_train = Some(dr_dataset(&model, train_view, scale)?);
            r
        } else {
            let model = train(&t.train, &ctx.a_train, &ctx.y_train, &cfg.model)?;
            let mut r = evaluate(&model, test, &ctx.a_test, &ctx.y_test, scale)?;
            r.dr_train = Some(dr_dataset(&model, train_view, scale)?);
            r
        };
        report.data_fidelity = Some(data_fidelity(&ctx.x_train, &t.train)?);
        report.training_adjustment_rate = Some(training_adjustment_rate(&ctx.x_train, &t.train, &ctx.players)?);
        report.test_adjustment_necessity = method.test_adjustment_necessity();
        Ok(report)
    })();
    match result {
        Ok(r) => out.report = Some(r),
        Err(e) => out.error = Some(e.to_string()),
    }
    out
}

fn diagnostic(ctx: &FoldContext, aug: &Augmented, cfg: &ExperimentConfig) -> Result<FoldDiagnostic> {
    let mut gaps = Vec::new();
    let mut grand_max: f64 = 0.0;
    for a in 0..2 {
        let target = ctx.x_train.select_rows(&aug.index[a]);
        let d = theorem_c2_diagnostic(&ctx.model, &target, &aug.directions[a], &ctx.players, &cfg.fairshap)?;
        gaps.extend(d.gaps);
        grand_max = grand_max.max(d.grand_max_gap);
    }
    gaps.sort_by(f64::total_cmp);
    let rows = gaps.len();
    Ok(FoldDiagnostic {
        fold: ctx.index,
        stats: GapStats {
            rows,
            mean: if rows == 0 { 0.0 } else { gaps.iter().sum::<f64>() / rows as f64 },
            median: if rows == 0 { 0.0 } else { gaps[rows / 2] },
            max: gaps.last().copied().unwrap_or(0.0),
            grand_max,
        },
    })
}

struct FoldOutcome {
    methods: Vec<MethodFold>,
    sweep: Option<Vec<SweepPoint>>,
    diagnostic: Option<FoldDiagnostic>,
    failure: Option<String>,
    seconds: f64,
}

fn run_fold(
    dataset: &TabularDataset,
    index: usize,
    fold: &Fold,
    cfg: &ExperimentConfig,
    with_sweep: bool,
) -> FoldOutcome {
    let start = Instant::now();
    let mut outcome = FoldOutcome {
        methods: Vec::new(),
        sweep: None,
        diagnostic: None,
        failure: None,
        seconds: 0.0,
    };
    let inner = |outcome: &mut FoldOutcome| -> Result<()> {
        let ctx = FoldContext::prepare(dataset, index, fold, cfg)?;
        let need = with_sweep || cfg.methods.iter().any(|m| m.needs_fairshap());
        let augmented = if need { Some(ctx.augment(cfg)?) } else { None };
        if let Some(aug) = &augmented {
            outcome.diagnostic = Some(diagnostic(&ctx, aug, cfg)?);
        }
        outcome.methods = cfg
            .methods
            .par_iter()
            .map(|&m| run_method(&ctx, m, augmented.as_ref(), cfg))
            .collect();
        if with_sweep {
            let aug = augmented.as_ref().expect("computed above");
            outcome.sweep = Some(modification_sweep(
                &ctx.data(),
                &aug.log,
                &ctx.players,
                &cfg.model,
                cfg.sweep.n_points,
                cfg.fairshap.scale,
            )?);
        }
        Ok(())
    };
    if let Err(e) = inner(&mut outcome) {
        outcome.failure = Some(e.to_string());
    }
    outcome.seconds = start.elapsed().as_secs_f64();
    outcome
}

pub fn run_on_dataset(dataset: &TabularDataset, cfg: &ExperimentConfig, with_sweep: bool) -> Result<ExperimentReport> {
    cfg.validate()?;
    let start = Instant::now();
    let plan = kfold_split(dataset, cfg.folds, cfg.seed)?;
    let outcomes: Vec<FoldOutcome> = plan
        .folds
        .par_iter()
        .enumerate()
        .map(|(i, f)| run_fold(dataset, i, f, cfg, with_sweep))
        .collect();
    let mut failures = Vec::new();
    let mut per_method: Vec<Vec<MethodFold>> = vec![Vec::new(); cfg.methods.len()];
    let mut sweeps = Vec::new();
    let mut diagnostics = Vec::new();
    let mut fold_seconds = Vec::new();
    for (i, o) in outcomes.into_iter().enumerate() {
        fold_seconds.push(o.seconds);
        if let Some(reason) = o.failure {
            failures.push(FoldFailure { fold: i, reason });
        }
        for (slot, mf) in o.methods.into_iter().enumerate() {
            per_method[slot].push(mf);
        }
        sweeps.extend(o.sweep);
        diagnostics.extend(o.diagnostic);
    }
    let methods = cfg
        .methods
        .iter()
        .zip(per_method)
        .map(|(&m, folds)| MethodResult::new(m, folds))
        .collect();
    let sweep = with_sweep.then(|| SweepResult {
        mean: mean_curve(&sweeps),
        folds: sweeps,
    });
    Ok(ExperimentReport {
        tool: tool_info(),
        config: cfg.clone(),
        rows: dataset.len(),
        group_sizes: dataset.group_sizes(),
        stratification: plan.stratification,
        sweep_ordering: "descending phi, ties by (group, row, feature)".into(),
        methods,
        sweep,
        diagnostics,
        failures,
        timing: Timing {
            total_seconds: start.elapsed().as_secs_f64(),
            fold_seconds,
        },
    })
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let dataset = load_dataset(&cfg.dataset.path, &cfg.dataset.schema)?;
    run_on_dataset(&dataset, cfg, cfg.sweep.enabled)
}

/// Encoded rows and baseline model of fold `index` alone.
pub fn load_fold(cfg: &ExperimentConfig, index: usize) -> Result<(TabularDataset, FoldContext)> {
    cfg.validate()?;
    if index >= cfg.folds {
        return Err(crate::error::HarnessError::Invalid(format!(
            "fold {index} out of range for {} folds",
            cfg.folds
        )));
    }
    let dataset = load_dataset(&cfg.dataset.path, &cfg.dataset.schema)?;
    let plan = kfold_split(&dataset, cfg.folds, cfg.seed)?;
    let ctx = FoldContext::prepare(&dataset, index, &plan.folds[index], cfg)?;
    Ok((dataset, ctx))
}

pub fn run_sweep(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let dataset = load_dataset(&cfg.dataset.path, &cfg.dataset.schema)?;
    run_on_dataset(&dataset, cfg, true)
}
