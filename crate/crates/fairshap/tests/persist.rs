use proptest::prelude::*;

use fairshap::persist::{
    decode_correlation_remover, decode_model, encode_correlation_remover, encode_model,
};
use fairshap_core::baselines::CorrelationRemover;
use fairshap_core::model::{LogisticModel, Model, Stump, StumpEnsemble, TrainConfig};

fn any_f64() -> impl Strategy<Value = f64> {
    prop::num::f64::ANY.prop_filter("finite", |v| v.is_finite())
}

fn stump(n_features: usize) -> impl Strategy<Value = Stump> {
    (0..=n_features, any_f64(), any_f64(), any_f64()).prop_map(|(feature, threshold, left, right)| Stump {
        feature,
        threshold,
        left,
        right,
    })
}

fn model() -> impl Strategy<Value = Model> {
    let logistic = (prop::collection::vec(any_f64(), 1..8), any_f64(), any::<u64>(), 0usize..5000).prop_map(
        |(weights, bias, seed, iterations_run)| {
            Model::Logistic(LogisticModel {
                weights,
                bias,
                seed,
                iterations_run,
            })
        },
    );
    let stumps = (1usize..6).prop_flat_map(|n| {
        (any_f64(), prop::collection::vec(stump(n), 0..10), any::<u64>()).prop_map(move |(base_score, stumps, seed)| {
            Model::BoostedStumps(StumpEnsemble {
                n_features: n,
                base_score,
                stumps,
                seed,
            })
        })
    });
    prop_oneof![logistic, stumps]
}

proptest! {
    #[test]
    fn model_files_round_trip_bit_exactly(m in model(), lr in any_f64(), l2 in any_f64(), it in 0usize..10_000) {
        let cfg = TrainConfig {
            kind: m.kind(),
            learning_rate: lr,
            iterations: it,
            l2_penalty: l2,
            tree_count: 7,
            seed: m.seed(),
        };
        let (back, back_cfg) = decode_model(&encode_model(&m, &cfg)).unwrap();
        prop_assert_eq!(format!("{back:?}"), format!("{m:?}"));
        prop_assert_eq!(back_cfg.kind, cfg.kind);
        prop_assert_eq!(back_cfg.learning_rate.to_bits(), lr.to_bits());
        prop_assert_eq!(back_cfg.l2_penalty.to_bits(), l2.to_bits());
        prop_assert_eq!(back_cfg.iterations, it);
    }

    #[test]
    fn remover_files_round_trip(alpha in 0.0f64..=1.0, mean in any_f64(), coefficients in prop::collection::vec(any_f64(), 0..6), drop in any::<bool>()) {
        let cr = CorrelationRemover { alpha, sensitive_mean: mean, coefficients, drop_sensitive: drop };
        prop_assert_eq!(decode_correlation_remover(&encode_correlation_remover(&cr)).unwrap(), cr);
    }
}
