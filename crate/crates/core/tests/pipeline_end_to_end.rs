//! Library-level walk through the whole pipeline: metadata parsing,
//! statistics, filtering, vectorization, splitting, balancing, training,
//! evaluation, and checkpoint round-trip.

use permnet_core::checkpoint;
use permnet_core::eval::{evaluate, model_scores, roc_curve};
use permnet_core::manifest::{parse_metadata_jsonl, write_metadata_jsonl, AppRecord, JsonlMode, Label};
use permnet_core::nn::{output_layer, Activation, LayerSpec, ModelConfig, OptimizerConfig};
use permnet_core::pipeline::{
    balance_by_duplication, collect_permission_stats, filter_permissions, split_dataset,
    vectorize_dataset, FilterConfig, SplitSpec,
};
use permnet_core::rng;
use permnet_core::train::{train, TrainSchedule};
use rand::Rng;

/// Corpus where one permission is a strong (but imperfect) malware
/// signal and the rest are noise. The 8% label flip keeps the signal
/// permission present in both classes, so the filter retains it.
fn signal_corpus(apps: usize, seed: u64) -> Vec<AppRecord> {
    let mut rng = rng::seeded(seed);
    (0..apps)
        .map(|i| {
            let mut permissions = vec![];
            if rng.random::<f64>() < 0.9 {
                permissions.push("app.permission.COMMON".to_string());
            }
            let hot = rng.random::<f64>() < 0.45;
            if hot {
                permissions.push("app.permission.HOT".to_string());
            }
            for n in 0..6 {
                if rng.random::<f64>() < 0.4 {
                    permissions.push(format!("app.permission.NOISE{n}"));
                }
            }
            if rng.random::<f64>() < 0.002 {
                permissions.push(format!("app.permission.SINGLETON{i}"));
            }
            let malware = hot != (rng.random::<f64>() < 0.08);
            AppRecord::new(
                format!("app{i:05}"),
                if malware { Label::Malware } else { Label::Benign },
                permissions,
            )
        })
        .collect()
}

#[test]
fn full_pipeline_learns_the_signal() {
    let records = signal_corpus(1200, 31);

    // Serialize and re-parse: ingestion must be lossless.
    let jsonl = write_metadata_jsonl(&records);
    let parsed = parse_metadata_jsonl(&jsonl, JsonlMode::Strict).unwrap();
    assert_eq!(parsed.records, records);

    let stats = collect_permission_stats(&records).unwrap();
    let list = filter_permissions(&stats, &FilterConfig::default()).unwrap();
    // Singletons fall below the threshold; the signal permissions stay.
    assert!(list.names().iter().any(|n| n == "app.permission.HOT"));
    assert!(list.names().iter().all(|n| !n.starts_with("app.permission.SINGLETON")));

    let dataset = vectorize_dataset(&records, &list).unwrap();
    let split = split_dataset(
        &dataset,
        &SplitSpec {
            test_per_class: 60,
            validation_per_class: 60,
            seed: 7,
        },
    )
    .unwrap();
    let balanced = balance_by_duplication(&split.train, 5).unwrap();
    let (b, m) = balanced.class_counts();
    assert_eq!(b, m);

    let p = dataset.feature_dim();
    let model = ModelConfig::new(
        p,
        vec![
            LayerSpec::Dense {
                in_dim: p,
                out_dim: 8,
                activation: Activation::ReLU,
                l2_weight: 0.0005,
                dropout_rate: 0.25,
            },
            output_layer(8),
        ],
        3,
    )
    .unwrap();
    let schedule = TrainSchedule {
        max_epochs: 120,
        patience_epochs: 120,
        shuffle_seed: 11,
        ..Default::default()
    };
    let outcome =
        train::<f64>(&model, &balanced, &split.validation, &schedule, OptimizerConfig::default())
            .unwrap();

    let report = evaluate(&outcome.params, &model, &split.test, 0.5).unwrap();
    // The flip noise caps achievable accuracy around 0.92.
    assert!(
        report.accuracy >= 0.85,
        "single indicative permission should be learnable, got {:.4}",
        report.accuracy
    );

    let scores = model_scores(&model, &outcome.params, &split.test).unwrap();
    let labels: Vec<u8> = split.test.rows.iter().map(|r| r.label).collect();
    let roc = roc_curve(&scores, &labels);
    assert!(roc.auc.unwrap() >= 0.85);

    // Checkpoint round trip preserves behavior up to f32 quantization.
    let bytes = checkpoint::encode(&model, &outcome.params);
    let (model2, params2) = checkpoint::decode::<f64>(&bytes).unwrap();
    let report2 = evaluate(&params2, &model2, &split.test, 0.5).unwrap();
    assert_eq!(report.true_positives, report2.true_positives);
    assert_eq!(report.false_positives, report2.false_positives);
}
