//! Learning-rate and optimizer sweeps over a fixed model/dataset pair.
//!
//! Each swept value gets its own row: train (or reuse cached weights),
//! run the noise sweep, tabulate baseline and normalized accuracies.
//! The report on disk is rewritten after every row, so an interrupted
//! sweep loses at most the row in flight.

use std::fs;
use std::path::PathBuf;

use crate::config::ExperimentConfig;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::noise::{self, NoiseSpec};
use crate::optim::{OptimizerConfig, OptimizerKind};
use crate::report::{emit_report, SweepReport, SweepRow};
use crate::rng::{fnv1a64, RngStream};
use crate::train::train_network;

/// Trains and noise-evaluates one row per configured learning rate.
///
/// Row randomness is keyed by the rate's value, not its list position:
/// a duplicated rate reproduces the exact same row, while distinct rates
/// get fresh initialization, shuffle and noise streams.
pub fn sweep_learning_rates(config: &ExperimentConfig) -> Result<SweepReport> {
    config.validate()?;
    let (train_set, test_set) = config.dataset.load::<f32>(config.seed)?;
    let axis = RngStream::new(config.seed).substream_named("lr");
    let mut report = SweepReport::default();
    for &alpha in &config.learning_rates {
        let optimizer = config.optimizer.build(alpha)?;
        let row_rng = axis.substream_named(&format!("{alpha:e}"));
        let row = run_row(config, &train_set, &test_set, &optimizer, "lr", &row_rng)?;
        report.rows.push(row);
        emit_report(&report, &config.output_dir)?;
    }
    Ok(report)
}

/// Trains and noise-evaluates one row per optimizer kind, all at the
/// first configured learning rate.
///
/// Every kind shares one initialization, shuffle order and noise stream,
/// so rows differ only by update rule; in particular a kind that reduces
/// to another (zero-momentum SGD variants) reproduces its row exactly.
pub fn sweep_optimizers(config: &ExperimentConfig) -> Result<SweepReport> {
    config.validate()?;
    let (train_set, test_set) = config.dataset.load::<f32>(config.seed)?;
    let row_rng = RngStream::new(config.seed).substream_named("opt");
    let alpha = config.learning_rates[0];
    let mut report = SweepReport::default();
    for kind in OptimizerKind::ALL {
        let optimizer = config.optimizer.build_kind(kind, alpha)?;
        let row = run_row(config, &train_set, &test_set, &optimizer, "opt", &row_rng)?;
        report.rows.push(row);
        emit_report(&report, &config.output_dir)?;
    }
    Ok(report)
}

fn run_row(
    config: &ExperimentConfig,
    train_set: &Dataset<f32>,
    test_set: &Dataset<f32>,
    optimizer: &OptimizerConfig,
    axis: &str,
    row_rng: &RngStream,
) -> Result<SweepRow> {
    let init_rng = row_rng.substream_named("init");
    let mut net =
        config.model.build::<f32>(train_set.example_shape(), train_set.class_count(), &init_rng)?;

    let cache = cache_path(config, optimizer, axis)?;
    if cache.exists() {
        net.load_weights(&cache)?;
    } else {
        train_network(
            &mut net,
            train_set,
            test_set,
            optimizer,
            config.epochs,
            config.batch_size,
            config.augmentation,
            &row_rng.substream_named("train"),
        )?;
        if let Some(parent) = cache.parent() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        net.save_weights(&cache)?;
    }

    let mut spec = NoiseSpec::new(0.0, config.noise.trials, row_rng.substream_named("noise"))?;
    spec.include_biases = config.noise.include_biases;
    spec.include_batchnorm = config.noise.include_batchnorm;
    let sweep = noise::noise_sweep(&net, test_set, &config.eta_fractions(), &spec)?;

    Ok(SweepRow::from_sweep(
        config.model.name(),
        config.dataset.name(),
        optimizer.alpha,
        optimizer.kind.name(),
        config.seed,
        &sweep,
    ))
}

/// Cache file for one row's trained weights. The key covers everything
/// that shapes those weights: sweep axis (it picks the rng streams),
/// model and dataset, the full optimizer setting, and the training
/// schedule. Rows that agree on all of it may share weights.
fn cache_path(
    config: &ExperimentConfig,
    optimizer: &OptimizerConfig,
    axis: &str,
) -> Result<PathBuf> {
    let key = format!(
        "{axis}|{}|{}|{}|alpha{:e}|mu{:e}|b1{:e}|b2{:e}|eps{:e}|epochs{}|batch{}|aug{}|seed{}",
        serde_json::to_string(&config.model)?,
        serde_json::to_string(&config.dataset)?,
        optimizer.kind.name(),
        optimizer.alpha,
        optimizer.momentum,
        optimizer.beta1,
        optimizer.beta2,
        optimizer.epsilon,
        config.epochs,
        config.batch_size,
        config.augmentation,
        config.seed,
    );
    Ok(config.output_dir.join("cache").join(format!("{:016x}.nrwt", fnv1a64(&key))))
}

#[cfg(test)]
mod tests;
