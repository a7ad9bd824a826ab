//! Additive Gaussian weight perturbation scaled per tensor, plus the
//! accuracy metrics built on it.
//!
//! Each selected parameter tensor gets noise with standard deviation
//! eta * std(tensor), where std is the population standard deviation of
//! that tensor's current values. A constant tensor therefore stays put at
//! any eta. Perturbations for trial i of tensor p come from the RNG
//! sub-stream (seed, i, p), so results never depend on scheduling or on
//! map iteration order.

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::nn::{Network, ParamClass};
use crate::rng::RngStream;
use crate::tensor::{tensor_std, Scalar, Tensor};

/// Non-baseline noise form factors evaluated by default: 1% through 40%.
pub const DEFAULT_ETAS: [f64; 6] = [0.01, 0.05, 0.10, 0.20, 0.30, 0.40];

/// Rows per forward pass when scoring a test set.
pub(crate) const EVAL_BATCH: usize = 256;

#[derive(Debug, Clone)]
pub struct NoiseSpec {
    /// Noise form factor: the reciprocal of the signal-to-noise ratio.
    pub eta: f64,
    pub include_biases: bool,
    pub include_batchnorm: bool,
    pub trials: usize,
    pub rng: RngStream,
}

impl NoiseSpec {
    pub fn new(eta: f64, trials: usize, rng: RngStream) -> Result<Self> {
        let spec =
            NoiseSpec { eta, include_biases: false, include_batchnorm: false, trials, rng };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eta.is_finite() && self.eta >= 0.0) {
            return Err(Error::invalid(format!("eta must be >= 0, got {}", self.eta)));
        }
        if self.trials == 0 {
            return Err(Error::invalid("trials must be >= 1"));
        }
        Ok(())
    }

    fn selects(&self, class: ParamClass) -> bool {
        match class {
            ParamClass::Weight => true,
            ParamClass::Bias => self.include_biases,
            ParamClass::BatchNormParam => self.include_batchnorm,
            // Running statistics are state, not weights.
            ParamClass::Buffer => false,
        }
    }
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct NoiseTrialResult {
    pub eta: f64,
    /// Accuracy of trial i, keyed by trial index.
    pub per_trial_acc: Vec<f64>,
    pub mean_acc: f64,
    pub std_acc: f64,
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct NoiseSweepResult {
    pub baseline_acc: f64,
    pub points: Vec<NoiseTrialResult>,
    /// mean_acc of each point divided by the baseline.
    pub normalized: Vec<f64>,
    /// Mean of `normalized` over points with eta > 0; absent when the
    /// sweep holds only the baseline.
    pub avg_normalized: Option<f64>,
}

/// Noise standard deviation for one tensor: eta times its population std.
pub fn noise_sigma<S: Scalar>(weights: &Tensor<S>, eta: f64) -> Result<f64> {
    if !(eta.is_finite() && eta >= 0.0) {
        return Err(Error::invalid(format!("eta must be >= 0, got {eta}")));
    }
    Ok(eta * tensor_std(weights)?)
}

/// Returns a perturbed copy of `net`; the original is untouched.
///
/// eta = 0 yields a bit-exact copy without consuming randomness.
pub fn inject_noise<S: Scalar>(
    net: &Network<S>,
    spec: &NoiseSpec,
    trial_index: u64,
) -> Result<Network<S>> {
    spec.validate()?;
    let mut noisy = net.clone();
    if spec.eta == 0.0 {
        return Ok(noisy);
    }
    let trial_rng = spec.rng.substream(trial_index);
    let selected: Vec<String> = noisy
        .params()
        .keys()
        .filter(|name| {
            noisy.param_class(name).map(|c| spec.selects(c)).unwrap_or(false)
        })
        .cloned()
        .collect();
    for name in selected {
        let tensor = noisy.params_mut().get_mut(&name).expect("name from the same map");
        let sigma = noise_sigma(tensor, spec.eta)?;
        if sigma == 0.0 {
            continue;
        }
        let mut stream = trial_rng.substream_named(&name);
        let data = tensor.data_mut();
        let mut i = 0;
        while i < data.len() {
            let (z0, z1) = stream.next_gaussian_pair();
            data[i] = S::from_f64(data[i].to_f64() + sigma * z0);
            if i + 1 < data.len() {
                data[i + 1] = S::from_f64(data[i + 1].to_f64() + sigma * z1);
            }
            i += 2;
        }
    }
    Ok(noisy)
}

pub(crate) fn mean_and_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Runs `spec.trials` independent inject-then-score trials.
pub fn evaluate_under_noise<S: Scalar>(
    net: &Network<S>,
    test_data: &Dataset<S>,
    spec: &NoiseSpec,
) -> Result<NoiseTrialResult> {
    spec.validate()?;
    if test_data.is_empty() {
        return Err(Error::invalid("cannot evaluate noise on an empty test set"));
    }
    let mut per_trial_acc = Vec::with_capacity(spec.trials);
    for trial in 0..spec.trials as u64 {
        let noisy = inject_noise(net, spec, trial)?;
        per_trial_acc.push(noisy.accuracy(test_data, EVAL_BATCH)?);
    }
    let (mean_acc, std_acc) = mean_and_std(&per_trial_acc);
    Ok(NoiseTrialResult { eta: spec.eta, per_trial_acc, mean_acc, std_acc })
}

/// Accuracy under noise divided by the noise-free baseline accuracy.
pub fn normalized_accuracy(a_x: f64, a_0: f64) -> Result<f64> {
    if !(a_0.is_finite() && a_0 > 0.0) {
        return Err(Error::invalid(format!("baseline accuracy must be > 0, got {a_0}")));
    }
    Ok(a_x / a_0)
}

/// Arithmetic mean of normalized accuracies over the non-baseline etas.
pub fn average_normalized_accuracy(normalized: &[f64]) -> Result<f64> {
    if normalized.is_empty() {
        return Err(Error::invalid("cannot average an empty list of normalized accuracies"));
    }
    Ok(normalized.iter().sum::<f64>() / normalized.len() as f64)
}

/// Full sweep: baseline once (no sampling), then one multi-trial
/// evaluation per eta. `template.eta` is ignored.
pub fn noise_sweep<S: Scalar>(
    net: &Network<S>,
    test_data: &Dataset<S>,
    etas: &[f64],
    template: &NoiseSpec,
) -> Result<NoiseSweepResult> {
    if etas.is_empty() {
        return Err(Error::invalid("eta list must be non-empty"));
    }
    template.validate()?;
    if test_data.is_empty() {
        return Err(Error::invalid("cannot evaluate noise on an empty test set"));
    }
    let baseline_acc = net.accuracy(test_data, EVAL_BATCH)?;
    let mut points = Vec::with_capacity(etas.len());
    for &eta in etas {
        if !(eta.is_finite() && eta >= 0.0) {
            return Err(Error::invalid(format!("eta must be >= 0, got {eta}")));
        }
        if eta == 0.0 {
            points.push(NoiseTrialResult {
                eta,
                per_trial_acc: vec![baseline_acc],
                mean_acc: baseline_acc,
                std_acc: 0.0,
            });
        } else {
            let spec = NoiseSpec { eta, ..template.clone() };
            points.push(evaluate_under_noise(net, test_data, &spec)?);
        }
    }
    let normalized = points
        .iter()
        .map(|p| normalized_accuracy(p.mean_acc, baseline_acc))
        .collect::<Result<Vec<f64>>>()?;
    let non_baseline: Vec<f64> = points
        .iter()
        .zip(&normalized)
        .filter(|(p, _)| p.eta > 0.0)
        .map(|(_, a)| *a)
        .collect();
    let avg_normalized = if non_baseline.is_empty() {
        None
    } else {
        Some(average_normalized_accuracy(&non_baseline)?)
    };
    Ok(NoiseSweepResult { baseline_acc, points, normalized, avg_normalized })
}
