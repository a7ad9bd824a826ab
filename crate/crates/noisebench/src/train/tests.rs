use super::*;
use crate::config::{DatasetConfig, ModelConfig};
use crate::data::generate_synthetic;
use crate::error::Error;
use crate::nn::build_mlp;
use crate::optim::OptimizerKind;

fn easy_task(seed: u64) -> (Network<f32>, Dataset<f32>, Dataset<f32>) {
    let (train, test) = generate_synthetic(4, 16, 50, 10.0, seed).unwrap();
    let layers = build_mlp(16, &[16], 4).unwrap();
    let net = Network::new(layers, &[16], 4, &RngStream::new(seed ^ 0x77)).unwrap();
    (net, train, test)
}

fn adam(alpha: f64) -> OptimizerConfig {
    OptimizerConfig::new(OptimizerKind::Adam, alpha).unwrap()
}

#[test]
fn learns_well_separated_clusters() {
    let (mut net, train, test) = easy_task(1);
    let history =
        train_network(&mut net, &train, &test, &adam(0.01), 30, 16, false, &RngStream::new(2))
            .unwrap();
    assert_eq!(history.train_loss.len(), 30);
    assert_eq!(history.test_acc.len(), 30);
    assert!(
        history.final_test_acc().unwrap() >= 0.95,
        "expected >= 0.95, got {:?}",
        history.final_test_acc()
    );
    assert!(history.train_loss[29] < history.train_loss[0]);
    assert!(history.wall_time_secs > 0.0);
}

#[test]
fn absurd_learning_rate_fails_loudly_or_lands_at_chance() {
    // Plain SGD: adaptive optimizers take bounded steps regardless of
    // gradient scale and shrug off absurd rates on a task this easy.
    let (mut net, train, test) = easy_task(3);
    let sgd = OptimizerConfig::new(OptimizerKind::Sgd, 1e3).unwrap();
    match train_network(&mut net, &train, &test, &sgd, 10, 16, false, &RngStream::new(4)) {
        Err(Error::Divergence { epoch, loss }) => {
            assert!(epoch < 10);
            assert!(!loss.is_finite());
        }
        Err(other) => panic!("unexpected error {other}"),
        Ok(history) => {
            let acc = history.final_test_acc().unwrap();
            assert!(acc <= 0.25 + 0.10, "silently healthy at lr 1000: accuracy {acc}");
        }
    }
}

#[test]
fn training_is_deterministic_per_seed() {
    let run = || {
        let (mut net, train, test) = easy_task(5);
        let h = train_network(
            &mut net,
            &train,
            &test,
            &adam(0.005),
            3,
            8,
            false,
            &RngStream::new(6),
        )
        .unwrap();
        (net, h)
    };
    let (net_a, hist_a) = run();
    let (net_b, hist_b) = run();
    assert!(net_a.params_bits_eq(&net_b));
    assert_eq!(hist_a.train_loss, hist_b.train_loss);
    assert_eq!(hist_a.test_acc, hist_b.test_acc);

    // A different shuffle stream must take a different path.
    let (mut net_c, train, test) = easy_task(5);
    train_network(&mut net_c, &train, &test, &adam(0.005), 3, 8, false, &RngStream::new(7))
        .unwrap();
    assert!(!net_a.params_bits_eq(&net_c));
}

#[test]
fn degenerate_arguments_are_rejected() {
    let (mut net, train, test) = easy_task(9);
    let r = train_network(&mut net, &train, &test, &adam(0.01), 0, 8, false, &RngStream::new(1));
    assert!(r.is_err());
    let r = train_network(&mut net, &train, &test, &adam(0.01), 1, 0, false, &RngStream::new(1));
    assert!(r.is_err());

    let empty = Dataset::new(crate::tensor::Tensor::<f32>::zeros(&[0, 16]), vec![], 4).unwrap();
    let r = train_network(&mut net, &empty, &test, &adam(0.01), 1, 8, false, &RngStream::new(1));
    assert!(r.is_err());
    let r = train_network(&mut net, &train, &empty, &adam(0.01), 1, 8, false, &RngStream::new(1));
    assert!(r.is_err());
}

#[test]
fn augmentation_needs_image_inputs() {
    let (mut net, train, test) = easy_task(11);
    let r = train_network(&mut net, &train, &test, &adam(0.01), 1, 8, true, &RngStream::new(1));
    assert!(matches!(r, Err(Error::InvalidArgument(_))), "flat rows are not images");
}

#[test]
fn trains_with_augmentation_on_images() {
    let (train, test) = generate_synthetic::<f32>(2, 48, 20, 6.0, 13).unwrap();
    let as_images = |d: &Dataset<f32>| {
        let n = d.len();
        let imgs = d.inputs().reshaped(&[n, 4, 4, 3]).unwrap();
        Dataset::new(imgs, d.labels().to_vec(), 2).unwrap()
    };
    let (train, test) = (as_images(&train), as_images(&test));
    let layers = build_mlp(48, &[8], 2).unwrap();
    let mut net = Network::new(layers, &[4, 4, 3], 2, &RngStream::new(14)).unwrap();
    let h = train_network(&mut net, &train, &test, &adam(0.01), 2, 8, true, &RngStream::new(15))
        .unwrap();
    assert!(h.train_loss.iter().all(|l| l.is_finite()));
}

#[test]
fn run_training_persists_weights_and_history() {
    let dir = tempfile::tempdir().unwrap();
    let config = ExperimentConfig {
        model: ModelConfig::Mlp { widths: vec![12] },
        dataset: DatasetConfig::Synthetic { classes: 4, dim: 16, per_class: 40, separation: 8.0, shape: None, label_noise: 0.0 },
        learning_rates: vec![0.01],
        optimizer: crate::config::OptimizerSettings {
            kind: "adam".to_string(),
            ..Default::default()
        },
        epochs: 10,
        batch_size: 16,
        augmentation: false,
        seed: 17,
        noise: Default::default(),
        output_dir: dir.path().to_path_buf(),
    };
    let (net, history) = run_training(&config).unwrap();
    assert_eq!(history.test_acc.len(), 10);

    let weights = dir.path().join("mlp12_synthetic4c16d_seed17.nrwt");
    let hist_path = dir.path().join("mlp12_synthetic4c16d_seed17_history.json");
    assert!(weights.is_file());
    let text = std::fs::read_to_string(&hist_path).unwrap();
    let parsed: TrainingHistory = serde_json::from_str(&text).unwrap();
    assert_eq!(parsed.train_loss, history.train_loss);

    // The saved weights reproduce the trained network exactly.
    let (train, _) = config.dataset.load::<f32>(config.seed).unwrap();
    let mut reloaded = config
        .model
        .build::<f32>(train.example_shape(), train.class_count(), &RngStream::new(99))
        .unwrap();
    reloaded.load_weights(&weights).unwrap();
    assert!(reloaded.params_bits_eq(&net));
}
