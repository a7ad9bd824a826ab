//! Minibatch training with per-epoch reshuffling, optional augmentation,
//! and a divergence detector that names the epoch where the loss left
//! the reals.

use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::data::{augment, Dataset};
use crate::error::{Error, Result};
use crate::nn::Network;
use crate::noise::EVAL_BATCH;
use crate::optim::{self, OptimizerConfig, OptimizerState};
use crate::rng::RngStream;
use crate::tensor::Scalar;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainingHistory {
    pub train_loss: Vec<f64>,
    pub train_acc: Vec<f64>,
    pub test_acc: Vec<f64>,
    pub wall_time_secs: f64,
}

impl TrainingHistory {
    pub fn final_test_acc(&self) -> Option<f64> {
        self.test_acc.last().copied()
    }
}

/// Trains `net` in place for a fixed epoch budget.
///
/// Epoch e shuffles and augments from sub-stream (rng, e), so a run is
/// reproducible from (initial weights, rng) alone.
pub fn train_network<S: Scalar>(
    net: &mut Network<S>,
    train: &Dataset<S>,
    test: &Dataset<S>,
    optimizer: &OptimizerConfig,
    epochs: usize,
    batch_size: usize,
    augmentation: bool,
    rng: &RngStream,
) -> Result<TrainingHistory> {
    if train.is_empty() {
        return Err(Error::invalid("training set is empty"));
    }
    if test.is_empty() {
        return Err(Error::invalid("test set is empty"));
    }
    if epochs == 0 {
        return Err(Error::invalid("epochs must be >= 1"));
    }
    if batch_size == 0 {
        return Err(Error::invalid("batch_size must be >= 1"));
    }
    optimizer.validate()?;
    let started = Instant::now();
    let mut state = OptimizerState::new();
    let mut history = TrainingHistory {
        train_loss: Vec::with_capacity(epochs),
        train_acc: Vec::with_capacity(epochs),
        test_acc: Vec::with_capacity(epochs),
        wall_time_secs: 0.0,
    };
    let mut order: Vec<usize> = (0..train.len()).collect();
    for epoch in 0..epochs {
        let mut epoch_rng = rng.substream(epoch as u64);
        epoch_rng.shuffle(&mut order);
        let mut loss_sum = 0.0f64;
        for chunk in order.chunks(batch_size) {
            let mut batch = train.gather(chunk)?;
            if augmentation {
                batch = augment(&batch, &mut epoch_rng)?;
            }
            let (loss, grads) = net.train_batch(&batch)?;
            if !loss.is_finite() {
                return Err(Error::Divergence { epoch, loss });
            }
            loss_sum += loss * chunk.len() as f64;
            optim::step(optimizer, &mut state, net.params_mut(), &grads)?;
        }
        history.train_loss.push(loss_sum / train.len() as f64);
        history.train_acc.push(net.accuracy(train, EVAL_BATCH)?);
        history.test_acc.push(net.accuracy(test, EVAL_BATCH)?);
    }
    history.wall_time_secs = started.elapsed().as_secs_f64();
    Ok(history)
}

/// End-to-end single run from a config: load data, build the model,
/// train at the first learning rate, and save weights plus history
/// under the output directory.
pub fn run_training(config: &ExperimentConfig) -> Result<(Network<f32>, TrainingHistory)> {
    config.validate()?;
    let (train, test) = config.dataset.load::<f32>(config.seed)?;
    let master = RngStream::new(config.seed);
    let mut net = config.model.build::<f32>(
        train.example_shape(),
        train.class_count(),
        &master.substream_named("init"),
    )?;
    let alpha = config.learning_rates[0];
    let optimizer = config.optimizer.build(alpha)?;
    let history = train_network(
        &mut net,
        &train,
        &test,
        &optimizer,
        config.epochs,
        config.batch_size,
        config.augmentation,
        &master.substream_named("train"),
    )?;
    let stem = format!("{}_{}_seed{}", config.model.name(), config.dataset.name(), config.seed);
    std::fs::create_dir_all(&config.output_dir)
        .map_err(|e| Error::io(&config.output_dir, e))?;
    net.save_weights(&config.output_dir.join(format!("{stem}.nrwt")))?;
    write_history(&config.output_dir.join(format!("{stem}_history.json")), &history)?;
    Ok((net, history))
}

pub fn write_history(path: &Path, history: &TrainingHistory) -> Result<()> {
    let mut text = serde_json::to_string_pretty(history)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests;
