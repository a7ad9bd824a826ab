//! Measures how far minibatch gradients stray from the full-data
//! gradient, and checks the alpha^2 * C / |B| ceiling on that noise power.
//!
//! All gradients are taken at the network's current parameters in eval
//! mode, flattened over trainable tensors in lexicographic name order.
//! The deviation constant C sums coordinates in sorted-value order, so it
//! is exactly invariant under dataset shuffling.

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::nn::{Gradients, Mode, Network};
use crate::rng::RngStream;
use crate::tensor::Scalar;

/// Examples per backward pass when a gradient spans many rows.
const GRAD_CHUNK: usize = 1024;

/// Cap on the number of enumerated batches in [`exhaustive_noise_power`].
const ENUMERATION_LIMIT: u128 = 200_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sampling {
    WithReplacement,
    WithoutReplacement,
}

impl Sampling {
    pub fn name(self) -> &'static str {
        match self {
            Sampling::WithReplacement => "with_replacement",
            Sampling::WithoutReplacement => "without_replacement",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "with" | "with_replacement" => Ok(Sampling::WithReplacement),
            "without" | "without_replacement" => Ok(Sampling::WithoutReplacement),
            other => Err(Error::invalid(format!(
                "unknown sampling mode {other:?}, expected \"with\" or \"without\""
            ))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct GradNoiseConfig {
    pub alpha: f64,
    pub batch_size: usize,
    /// Minibatches drawn for the empirical expectation.
    pub sample_count: usize,
    pub sampling: Sampling,
    pub rng: RngStream,
}

impl GradNoiseConfig {
    pub fn validate(&self, dataset_len: usize) -> Result<()> {
        if !(self.alpha.is_finite() && self.alpha > 0.0) {
            return Err(Error::invalid(format!("alpha must be positive, got {}", self.alpha)));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch_size must be >= 1"));
        }
        if self.sample_count == 0 {
            return Err(Error::invalid("sample_count must be >= 1"));
        }
        if self.sampling == Sampling::WithoutReplacement && self.batch_size > dataset_len {
            return Err(Error::invalid(format!(
                "batch_size {} exceeds dataset size {} when sampling without replacement",
                self.batch_size, dataset_len
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct GradNoiseReport {
    pub full_grad_norm: f64,
    pub c: f64,
    pub empirical_noise_power: f64,
    pub theoretical_bound: f64,
    pub bound_satisfied: bool,
    pub relative_gap: f64,
}

fn flat_grads<S: Scalar>(net: &Network<S>, grads: &Gradients<S>) -> Vec<f64> {
    let mut out = Vec::with_capacity(net.num_trainable());
    for tensor in grads.values() {
        out.extend(tensor.data().iter().map(|g| g.to_f64()));
    }
    out
}

/// Gradient of the mean loss over `indices`, processed in fixed-size
/// chunks so the result depends only on the index sequence.
fn indexed_gradient<S: Scalar>(
    net: &Network<S>,
    data: &Dataset<S>,
    indices: &[usize],
) -> Result<Vec<f64>> {
    let mut acc = vec![0.0f64; net.num_trainable()];
    for chunk in indices.chunks(GRAD_CHUNK) {
        let batch = data.gather(chunk)?;
        let (_, grads) = net.loss_and_grads(&batch, Mode::Eval)?;
        let w = chunk.len() as f64 / indices.len() as f64;
        for (a, g) in acc.iter_mut().zip(flat_grads(net, &grads)) {
            *a += w * g;
        }
    }
    Ok(acc)
}

/// Gradient of the mean loss over the whole dataset, flattened over
/// trainable parameters in lexicographic name order.
pub fn full_gradient<S: Scalar>(net: &Network<S>, data: &Dataset<S>) -> Result<Vec<f64>> {
    if data.is_empty() {
        return Err(Error::invalid("cannot take a gradient over an empty dataset"));
    }
    let idx: Vec<usize> = (0..data.len()).collect();
    indexed_gradient(net, data, &idx)
}

/// One flattened gradient per example, in dataset order.
pub fn per_example_gradients<S: Scalar>(
    net: &Network<S>,
    data: &Dataset<S>,
) -> Result<Vec<Vec<f64>>> {
    if data.is_empty() {
        return Err(Error::invalid("cannot take a gradient over an empty dataset"));
    }
    (0..data.len()).map(|i| indexed_gradient(net, data, &[i])).collect()
}

fn sorted_sum(values: &mut Vec<f64>) -> f64 {
    values.sort_by(f64::total_cmp);
    let s = values.iter().sum();
    values.clear();
    s
}

/// Mean vector and mean squared distance from it, both summed over
/// sorted values so the answers ignore row order.
pub(crate) fn deviation_from_flat(grads: &[Vec<f64>]) -> (Vec<f64>, f64) {
    let n = grads.len();
    let dim = grads.first().map_or(0, Vec::len);
    let mut scratch = Vec::with_capacity(n);
    let mut mean = vec![0.0f64; dim];
    for (k, m) in mean.iter_mut().enumerate() {
        scratch.extend(grads.iter().map(|g| g[k]));
        *m = sorted_sum(&mut scratch) / n as f64;
    }
    scratch.extend(
        grads.iter().map(|g| g.iter().zip(&mean).map(|(x, m)| (x - m) * (x - m)).sum::<f64>()),
    );
    let c = sorted_sum(&mut scratch) / n as f64;
    (mean, c)
}

/// The per-example deviation constant: the mean over examples of the
/// squared distance between an example's gradient and the mean gradient.
pub fn deviation_constant<S: Scalar>(net: &Network<S>, data: &Dataset<S>) -> Result<f64> {
    let grads = per_example_gradients(net, data)?;
    Ok(deviation_from_flat(&grads).1)
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn sample_indices(rng: &mut RngStream, n: usize, config: &GradNoiseConfig) -> Vec<usize> {
    match config.sampling {
        Sampling::WithReplacement => {
            (0..config.batch_size).map(|_| rng.next_below(n as u64) as usize).collect()
        }
        Sampling::WithoutReplacement => {
            // Partial Fisher-Yates; sorted afterwards since a batch is a
            // set, which also makes the full-batch case reproduce the
            // full gradient bit for bit.
            let mut pool: Vec<usize> = (0..n).collect();
            for j in 0..config.batch_size {
                let k = j + rng.next_below((n - j) as u64) as usize;
                pool.swap(j, k);
            }
            pool.truncate(config.batch_size);
            pool.sort_unstable();
            pool
        }
    }
}

/// Monte-Carlo estimate of E[squared distance between alpha times the
/// minibatch gradient and alpha times the full gradient].
pub fn empirical_noise_power<S: Scalar>(
    net: &Network<S>,
    data: &Dataset<S>,
    config: &GradNoiseConfig,
) -> Result<f64> {
    config.validate(data.len())?;
    if data.is_empty() {
        return Err(Error::invalid("cannot measure gradient noise on an empty dataset"));
    }
    let reference = full_gradient(net, data)?;
    let mut total = 0.0f64;
    for m in 0..config.sample_count as u64 {
        let mut rng = config.rng.substream(m);
        let indices = sample_indices(&mut rng, data.len(), config);
        let batch_grad = indexed_gradient(net, data, &indices)?;
        total += squared_distance(&batch_grad, &reference);
    }
    // alpha enters only here, so power(alpha) = alpha^2 * power(1) exactly.
    Ok(config.alpha * config.alpha * (total / config.sample_count as f64))
}

/// Exact expectation of the noise power over every without-replacement
/// batch of the given size. Only feasible for small datasets; the batch
/// count is capped.
pub fn exhaustive_noise_power<S: Scalar>(
    net: &Network<S>,
    data: &Dataset<S>,
    batch_size: usize,
    alpha: f64,
) -> Result<f64> {
    let n = data.len();
    if batch_size == 0 || batch_size > n {
        return Err(Error::invalid(format!(
            "batch_size {batch_size} not in 1..={n} for exhaustive enumeration"
        )));
    }
    let mut count: u128 = 1;
    for k in 0..batch_size as u128 {
        count = count * (n as u128 - k) / (k + 1);
        if count > ENUMERATION_LIMIT {
            return Err(Error::invalid(format!(
                "enumerating all size-{batch_size} batches of {n} examples is not tractable"
            )));
        }
    }
    let reference = full_gradient(net, data)?;
    let mut indices: Vec<usize> = (0..batch_size).collect();
    let mut total = 0.0f64;
    let mut batches = 0u64;
    loop {
        let batch_grad = indexed_gradient(net, data, &indices)?;
        total += squared_distance(&batch_grad, &reference);
        batches += 1;
        // Advance to the next combination in lexicographic order.
        let mut i = batch_size;
        loop {
            if i == 0 {
                return Ok(alpha * alpha * (total / batches as f64));
            }
            i -= 1;
            if indices[i] != i + n - batch_size {
                break;
            }
        }
        indices[i] += 1;
        for j in i + 1..batch_size {
            indices[j] = indices[j - 1] + 1;
        }
    }
}

/// Runs the full measurement and compares it to alpha^2 * C / |B|.
///
/// With replacement the expectation equals the ceiling, so the pass
/// criterion allows 3/sqrt(M) of Monte-Carlo slack; without replacement
/// the expectation is strictly below it and no slack is granted.
pub fn check_bound<S: Scalar>(
    net: &Network<S>,
    data: &Dataset<S>,
    config: &GradNoiseConfig,
) -> Result<GradNoiseReport> {
    config.validate(data.len())?;
    let reference = full_gradient(net, data)?;
    let full_grad_norm = reference.iter().map(|g| g * g).sum::<f64>().sqrt();
    let c = deviation_constant(net, data)?;
    let empirical_noise_power = empirical_noise_power(net, data, config)?;
    let theoretical_bound = config.alpha * config.alpha * c / config.batch_size as f64;
    let slack = match config.sampling {
        Sampling::WithReplacement => 3.0 / (config.sample_count as f64).sqrt(),
        Sampling::WithoutReplacement => 0.0,
    };
    let (bound_satisfied, relative_gap) = if theoretical_bound == 0.0 {
        (empirical_noise_power == 0.0, 0.0)
    } else {
        (
            empirical_noise_power <= theoretical_bound * (1.0 + slack),
            (theoretical_bound - empirical_noise_power) / theoretical_bound,
        )
    };
    Ok(GradNoiseReport {
        full_grad_norm,
        c,
        empirical_noise_power,
        theoretical_bound,
        bound_satisfied,
        relative_gap,
    })
}
