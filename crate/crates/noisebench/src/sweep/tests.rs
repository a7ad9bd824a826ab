use super::*;

use std::path::Path;

use crate::config::{DatasetConfig, ModelConfig, NoiseSettings, OptimizerSettings};
use crate::report::parse_results_csv;

fn base_config(out: &Path) -> ExperimentConfig {
    ExperimentConfig {
        model: ModelConfig::Mlp { widths: vec![12] },
        dataset: DatasetConfig::Synthetic { classes: 4, dim: 8, per_class: 30, separation: 6.0, shape: None, label_noise: 0.0 },
        learning_rates: vec![0.01],
        optimizer: OptimizerSettings { kind: "adam".to_string(), ..Default::default() },
        epochs: 5,
        batch_size: 16,
        augmentation: false,
        seed: 3,
        noise: NoiseSettings {
            etas_percent: vec![0.0, 10.0, 30.0],
            trials: 3,
            include_biases: false,
            include_batchnorm: false,
        },
        output_dir: out.join("out"),
    }
}

#[test]
fn baseline_only_sweep_reduces_to_the_baseline() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = base_config(dir.path());
    config.noise.etas_percent = vec![0.0];

    let report = sweep_learning_rates(&config).unwrap();
    assert_eq!(report.rows.len(), 1);
    let row = &report.rows[0];
    assert_eq!(row.model, "mlp12");
    assert_eq!(row.dataset, "synthetic4c8d");
    assert_eq!(row.points.len(), 1);
    assert_eq!(row.points[0].trials, 1);
    assert_eq!(row.points[0].mean_acc, row.baseline_acc);
    assert_eq!(row.normalized, vec![1.0]);
    assert!(row.avg_normalized.is_none());

    let records = parse_results_csv(&config.output_dir.join("results.csv")).unwrap();
    assert_eq!(records.len(), 1);
    assert_eq!(records[0].eta_percent, 0.0);
}

#[test]
fn duplicate_learning_rates_give_identical_rows() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = base_config(dir.path());
    config.learning_rates = vec![0.01, 0.01];
    config.epochs = 3;

    let report = sweep_learning_rates(&config).unwrap();
    assert_eq!(report.rows.len(), 2);
    assert_eq!(report.rows[0], report.rows[1]);

    // Both rows share one weight cache entry.
    let cache_entries = fs::read_dir(config.output_dir.join("cache")).unwrap().count();
    assert_eq!(cache_entries, 1);
}

#[test]
fn reruns_are_byte_identical_and_served_from_the_cache() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = base_config(dir.path());
    config.epochs = 3;

    let first = sweep_learning_rates(&config).unwrap();
    let csv_path = config.output_dir.join("results.csv");
    let first_bytes = fs::read(&csv_path).unwrap();

    let second = sweep_learning_rates(&config).unwrap();
    assert_eq!(first, second);
    assert_eq!(first_bytes, fs::read(&csv_path).unwrap());

    // Swap the cached weights for an untrained net; the next run must
    // serve them instead of retraining.
    let cache_dir = config.output_dir.join("cache");
    let entry = fs::read_dir(&cache_dir).unwrap().next().unwrap().unwrap().path();
    let (train_set, _) = config.dataset.load::<f32>(config.seed).unwrap();
    let fresh = config
        .model
        .build::<f32>(train_set.example_shape(), train_set.class_count(), &RngStream::new(999))
        .unwrap();
    fresh.save_weights(&entry).unwrap();

    let tampered = sweep_learning_rates(&config).unwrap();
    assert!(
        tampered.rows[0].baseline_acc < first.rows[0].baseline_acc,
        "tampered cache was ignored: {} vs {}",
        tampered.rows[0].baseline_acc,
        first.rows[0].baseline_acc
    );
}

#[test]
fn every_row_normalizes_its_own_baseline_to_one() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = base_config(dir.path());
    config.learning_rates = vec![0.005, 0.02];
    config.epochs = 3;
    config.noise.trials = 2;

    let report = sweep_learning_rates(&config).unwrap();
    assert_eq!(report.rows.len(), 2);
    for row in &report.rows {
        assert_eq!(row.points[0].eta, 0.0);
        assert_eq!(row.normalized[0], 1.0);
        let tail = &row.normalized[1..];
        let mean = tail.iter().sum::<f64>() / tail.len() as f64;
        assert!((row.avg_normalized.unwrap() - mean).abs() < 1e-15);
    }
}

#[test]
fn a_failing_row_still_flushes_the_finished_rows() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = base_config(dir.path());
    config.optimizer = OptimizerSettings::default(); // plain sgd
    config.learning_rates = vec![0.01, 1e6];
    config.epochs = 3;

    let err = sweep_learning_rates(&config).unwrap_err();
    assert!(matches!(err, Error::Divergence { .. }), "{err}");

    let records = parse_results_csv(&config.output_dir.join("results.csv")).unwrap();
    assert_eq!(records.len(), config.noise.etas_percent.len());
    assert!(records.iter().all(|r| r.learning_rate == 0.01));
}

#[test]
fn optimizer_sweep_covers_every_kind_at_fixed_alpha() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = base_config(dir.path());
    config.epochs = 3;
    config.noise.etas_percent = vec![0.0, 20.0];
    config.noise.trials = 2;

    let report = sweep_optimizers(&config).unwrap();
    let names: Vec<&str> = report.rows.iter().map(|r| r.optimizer.as_str()).collect();
    assert_eq!(names, ["sgd", "sgd_momentum", "sgd_nesterov", "adam", "nadam", "adamax"]);
    assert!(report.rows.iter().all(|r| r.learning_rate == 0.01));
    assert!(report.rows.iter().all(|r| r.normalized[0] == 1.0));
}

#[test]
fn zero_momentum_variants_collapse_to_plain_sgd() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = base_config(dir.path());
    config.optimizer = OptimizerSettings {
        kind: "sgd".to_string(),
        momentum: Some(0.0),
        ..Default::default()
    };
    config.epochs = 3;
    config.noise.etas_percent = vec![0.0, 20.0];
    config.noise.trials = 2;

    let report = sweep_optimizers(&config).unwrap();
    let sgd = &report.rows[0];
    for row in &report.rows[1..3] {
        assert_eq!(row.baseline_acc, sgd.baseline_acc, "{}", row.optimizer);
        assert_eq!(row.points, sgd.points, "{}", row.optimizer);
        assert_eq!(row.normalized, sgd.normalized, "{}", row.optimizer);
    }
}

#[test]
fn adaptive_optimizers_match_or_beat_plain_sgd() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = base_config(dir.path());
    config.dataset = DatasetConfig::Synthetic { classes: 4, dim: 8, per_class: 30, separation: 2.0, shape: None, label_noise: 0.0 };
    config.learning_rates = vec![0.005];
    config.epochs = 8;
    config.noise.etas_percent = vec![0.0];
    config.noise.trials = 1;

    // Majority vote over five seeds: every adaptive kind should reach at
    // least the plain-SGD baseline accuracy at equal epochs.
    let mut successes = 0;
    for seed in 0..5u64 {
        config.seed = seed;
        config.output_dir = dir.path().join(format!("s{seed}"));
        let report = sweep_optimizers(&config).unwrap();
        let sgd = report.rows[0].baseline_acc;
        if report.rows[3..].iter().all(|r| r.baseline_acc >= sgd) {
            successes += 1;
        }
    }
    assert!(successes >= 3, "adaptive kinds beat sgd on only {successes}/5 seeds");
}
