use std::path::PathBuf;

use fairshap::config::Method;
use fairshap::experiment::{load_fold, run_on_dataset, METRICS};
use fairshap::{run_experiment, run_sweep, ExperimentConfig};
use fairshap_core::fairness::evaluate;

fn toy() -> ExperimentConfig {
    ExperimentConfig::load(&PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/toy.ini")).unwrap()
}

#[test]
fn identity_method_reproduces_baseline_evaluations() {
    let mut cfg = toy();
    cfg.methods = vec![Method::None];
    let report = run_experiment(&cfg).unwrap();
    let none = report.method(Method::None).unwrap();
    assert_eq!(none.folds.len(), cfg.folds);
    for (k, f) in none.folds.iter().enumerate() {
        let (_, ctx) = load_fold(&cfg, k).unwrap();
        let expected = evaluate(&ctx.model, &ctx.x_test, &ctx.a_test, &ctx.y_test, cfg.fairshap.scale).unwrap();
        let got = f.report.as_ref().unwrap();
        assert_eq!(got.accuracy, expected.accuracy);
        assert_eq!(got.dr, expected.dr);
        assert_eq!(got.dp, expected.dp);
        assert_eq!(got.training_adjustment_rate, Some(0.0));
    }
}

#[test]
fn aggregates_are_mean_and_sample_sd() {
    let report = run_experiment(&toy()).unwrap();
    for m in &report.methods {
        for metric in METRICS {
            let values: Vec<f64> = m
                .folds
                .iter()
                .filter_map(|f| f.report.as_ref().and_then(|r| fairshap::experiment::metric(r, metric)))
                .collect();
            let agg = &m.aggregate[metric];
            assert_eq!(agg.n + agg.missing, m.folds.len());
            if values.is_empty() {
                continue;
            }
            let mean = values.iter().sum::<f64>() / values.len() as f64;
            approx::assert_relative_eq!(agg.mean.unwrap(), mean, max_relative = 1e-12);
            if values.len() > 1 {
                let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (values.len() - 1) as f64;
                approx::assert_relative_eq!(agg.sd.unwrap(), var.sqrt(), epsilon = 1e-15, max_relative = 1e-9);
            }
        }
    }
}

#[test]
fn test_folds_follow_test_adjustment_necessity() {
    let report = run_experiment(&toy()).unwrap();
    for m in &report.methods {
        for f in &m.folds {
            if m.test_adjustment_necessity {
                assert!(!f.test_rows_unchanged(), "{} left the test rows alone", m.method);
            } else {
                assert!(f.test_rows_unchanged(), "{} touched the test rows", m.method);
            }
        }
    }
}

#[test]
fn embedded_config_replays_bit_exactly() {
    let report = run_experiment(&toy()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("report.json");
    std::fs::write(&path, serde_json::to_string(&report).unwrap()).unwrap();
    let replay_cfg = ExperimentConfig::load(&path).unwrap();
    assert_eq!(replay_cfg, report.config);
    let replay = run_experiment(&replay_cfg).unwrap();
    assert_eq!(replay.without_timing(), report.without_timing());
}

#[test]
fn sweep_ends_at_the_full_fairshap_run() {
    let report = run_sweep(&toy()).unwrap();
    let sweep = report.sweep.as_ref().unwrap();
    let fs = report.method(Method::Fairshap).unwrap();
    for (curve, fold) in sweep.folds.iter().zip(&fs.folds) {
        assert_eq!(curve[0].n_modifications, 0);
        assert_eq!(curve[0].dr_reduction_pct, 0.0);
        let last = curve.last().unwrap();
        let full = fold.report.as_ref().unwrap();
        assert_eq!(Some(last.n_modifications), fold.modifications);
        assert_eq!(last.report.accuracy, full.accuracy);
        assert_eq!(last.report.dr, full.dr);
        assert_eq!(last.report.dp, full.dp);
        assert_eq!(last.report.dr_train, full.dr_train);
    }
}

#[test]
fn sweep_without_edits_is_flat() {
    let mut cfg = toy();
    cfg.fairshap.threshold = f64::INFINITY;
    let report = run_sweep(&cfg).unwrap();
    let sweep = report.sweep.unwrap();
    assert!(sweep.mean.iter().all(|p| p.dr_reduction_pct == 0.0 && p.n_modifications == 0.0));
}

#[test]
fn correlation_remover_without_sensitive_input_has_zero_dr() {
    let mut cfg = toy();
    cfg.methods = vec![Method::CorrelationRemover];
    let blind = run_experiment(&cfg).unwrap();
    assert_eq!(blind.method(Method::CorrelationRemover).unwrap().mean("dr"), Some(0.0));
    cfg.baselines.drop_sensitive = false;
    let kept = run_experiment(&cfg).unwrap();
    assert!(kept.method(Method::CorrelationRemover).unwrap().mean("dr").unwrap() > 0.0);
}

#[test]
fn validation_rejects_bad_configs() {
    let mut cfg = toy();
    cfg.methods.clear();
    assert!(run_experiment(&cfg).is_err());
    let mut cfg = toy();
    cfg.folds = 1;
    assert!(run_experiment(&cfg).is_err());
    let mut cfg = toy();
    cfg.dataset.path = PathBuf::from("/nonexistent/toy.csv");
    let err = run_experiment(&cfg).unwrap_err().to_string();
    assert!(err.contains("/nonexistent/toy.csv"), "{err}");
}

#[test]
fn runs_are_deterministic_in_process() {
    let cfg = toy();
    let ds = fairshap::csv_io::load_dataset(&cfg.dataset.path, &cfg.dataset.schema).unwrap();
    let a = run_on_dataset(&ds, &cfg, true).unwrap();
    let b = run_on_dataset(&ds, &cfg, true).unwrap();
    assert_eq!(a.without_timing(), b.without_timing());
}
