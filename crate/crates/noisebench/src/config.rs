//! Experiment configuration: a JSON file mirroring these field names
//! exactly. Unknown keys are rejected so typos fail loudly.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{load_cifar10_binary, load_dataset, CifarOptions, Dataset};
use crate::error::{Error, Result};
use crate::nn::{build_mlp, build_resnet, Network};
use crate::optim::{OptimizerConfig, OptimizerKind};
use crate::rng::RngStream;
use crate::tensor::{Scalar, Tensor};

pub fn default_learning_rates() -> Vec<f64> {
    vec![0.0005, 0.000625, 0.00075, 0.001, 0.00125, 0.0015]
}

fn default_etas_percent() -> Vec<f64> {
    vec![0.0, 1.0, 5.0, 10.0, 20.0, 30.0, 40.0]
}

fn default_trials() -> usize {
    20
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase", deny_unknown_fields)]
pub enum ModelConfig {
    Resnet { n: usize },
    Mlp { widths: Vec<usize> },
}

impl ModelConfig {
    /// Row label for reports: depth for residual nets, layer widths for
    /// multilayer perceptrons.
    pub fn name(&self) -> String {
        match self {
            ModelConfig::Resnet { n } => format!("resnet{}", 6 * n + 2),
            ModelConfig::Mlp { widths } => {
                let mut s = String::from("mlp");
                for (i, w) in widths.iter().enumerate() {
                    if i > 0 {
                        s.push('x');
                    }
                    s.push_str(&w.to_string());
                }
                s
            }
        }
    }

    pub fn build<S: Scalar>(
        &self,
        input_shape: &[usize],
        class_count: usize,
        rng: &RngStream,
    ) -> Result<Network<S>> {
        let layers = match self {
            ModelConfig::Resnet { n } => build_resnet(*n, class_count, input_shape)?,
            ModelConfig::Mlp { widths } => {
                let features = input_shape.iter().product();
                build_mlp(features, widths, class_count)?
            }
        };
        Network::new(layers, input_shape, class_count, rng)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetConfig {
    Cifar10 {
        dir: PathBuf,
        #[serde(default)]
        subset: Option<usize>,
        #[serde(default)]
        center: bool,
    },
    Synthetic {
        classes: usize,
        dim: usize,
        per_class: usize,
        separation: f64,
        /// Reinterpret each example as this shape (e.g. [4, 4, 3] for
        /// image models); the product must equal `dim`.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        shape: Option<Vec<usize>>,
        /// Fraction of training labels reassigned to a different class,
        /// drawn deterministically from the dataset seed. Test labels
        /// stay clean.
        #[serde(default, skip_serializing_if = "zero_fraction")]
        label_noise: f64,
    },
    File {
        path: PathBuf,
    },
}

impl DatasetConfig {
    pub fn name(&self) -> String {
        match self {
            DatasetConfig::Cifar10 { subset, .. } => match subset {
                Some(k) => format!("cifar10s{k}"),
                None => "cifar10".to_string(),
            },
            DatasetConfig::Synthetic { classes, dim, .. } => format!("synthetic{classes}c{dim}d"),
            DatasetConfig::File { path } => path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "file".to_string()),
        }
    }

    /// Loads train and test splits. `seed` only matters for synthetic
    /// data, which is generated fresh and deterministically from it.
    pub fn load<S: Scalar>(&self, seed: u64) -> Result<(Dataset<S>, Dataset<S>)> {
        match self {
            DatasetConfig::Cifar10 { dir, subset, center } => {
                load_cifar10_binary(dir, &CifarOptions { subset: *subset, center: *center })
            }
            DatasetConfig::Synthetic { classes, dim, per_class, separation, shape, label_noise } => {
                let (mut train, test) =
                    crate::data::generate_synthetic(*classes, *dim, *per_class, *separation, seed)?;
                if *label_noise > 0.0 {
                    let rng = RngStream::new(seed).substream_named("label-noise");
                    train = crate::data::flip_labels(&train, *label_noise, &rng)?;
                }
                match shape {
                    None => Ok((train, test)),
                    Some(shape) => Ok((reshaped(train, shape)?, reshaped(test, shape)?)),
                }
            }
            DatasetConfig::File { path } => load_dataset(path),
        }
    }
}

fn zero_fraction(x: &f64) -> bool {
    *x == 0.0
}

fn reshaped<S: Scalar>(data: Dataset<S>, shape: &[usize]) -> Result<Dataset<S>> {
    let features: usize = data.example_shape().iter().product();
    if shape.iter().product::<usize>() != features {
        return Err(Error::Config(format!(
            "dataset.shape {shape:?} does not hold {features} features per example"
        )));
    }
    let mut full = vec![data.len()];
    full.extend_from_slice(shape);
    let inputs = Tensor::from_vec(&full, data.inputs().data().to_vec())?;
    Dataset::new(inputs, data.labels().to_vec(), data.class_count())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerSettings {
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub momentum: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta2: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
}

impl Default for OptimizerSettings {
    fn default() -> Self {
        OptimizerSettings {
            kind: "sgd".to_string(),
            momentum: None,
            beta1: None,
            beta2: None,
            epsilon: None,
        }
    }
}

impl OptimizerSettings {
    pub fn build(&self, alpha: f64) -> Result<OptimizerConfig> {
        self.build_kind(OptimizerKind::parse(&self.kind)?, alpha)
    }

    /// Same overrides under a different update rule; used by the
    /// optimizer sweep.
    pub fn build_kind(&self, kind: OptimizerKind, alpha: f64) -> Result<OptimizerConfig> {
        let mut cfg = OptimizerConfig::new(kind, alpha)?;
        if let Some(m) = self.momentum {
            cfg.momentum = m;
        }
        if let Some(b) = self.beta1 {
            cfg.beta1 = b;
        }
        if let Some(b) = self.beta2 {
            cfg.beta2 = b;
        }
        if let Some(e) = self.epsilon {
            cfg.epsilon = e;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSettings {
    /// Noise form factors to sweep, in percent; 0 is the baseline row.
    #[serde(default = "default_etas_percent")]
    pub etas_percent: Vec<f64>,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub include_biases: bool,
    #[serde(default)]
    pub include_batchnorm: bool,
}

impl Default for NoiseSettings {
    fn default() -> Self {
        NoiseSettings {
            etas_percent: default_etas_percent(),
            trials: default_trials(),
            include_biases: false,
            include_batchnorm: false,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelConfig,
    pub dataset: DatasetConfig,
    #[serde(default = "default_learning_rates")]
    pub learning_rates: Vec<f64>,
    #[serde(default)]
    pub optimizer: OptimizerSettings,
    pub epochs: usize,
    pub batch_size: usize,
    #[serde(default)]
    pub augmentation: bool,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub noise: NoiseSettings,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.learning_rates.is_empty() {
            return Err(Error::Config("learning_rates must be non-empty".to_string()));
        }
        for &lr in &self.learning_rates {
            if !(lr.is_finite() && lr > 0.0) {
                return Err(Error::Config(format!("learning rates must be positive, got {lr}")));
            }
        }
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be >= 1".to_string()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be >= 1".to_string()));
        }
        if self.noise.trials == 0 {
            return Err(Error::Config("noise.trials must be >= 1".to_string()));
        }
        for &eta in &self.noise.etas_percent {
            if !(eta.is_finite() && eta >= 0.0) {
                return Err(Error::Config(format!(
                    "noise.etas_percent entries must be >= 0, got {eta}"
                )));
            }
        }
        if let DatasetConfig::Synthetic { label_noise, .. } = &self.dataset {
            if !(0.0..=1.0).contains(label_noise) {
                return Err(Error::Config(format!(
                    "dataset.label_noise must be in [0, 1], got {label_noise}"
                )));
            }
        }
        match &self.model {
            ModelConfig::Resnet { n } if *n == 0 => {
                return Err(Error::Config("model.n must be >= 1".to_string()));
            }
            ModelConfig::Mlp { widths } if widths.iter().any(|&w| w == 0) => {
                return Err(Error::Config("model.widths must all be >= 1".to_string()));
            }
            _ => {}
        }
        // Fails early on an unknown optimizer kind, listing valid names.
        OptimizerKind::parse(&self.optimizer.kind)?;
        self.optimizer.build(self.learning_rates[0])?;
        Ok(())
    }

    /// Sweep etas as fractions, in config order.
    pub fn eta_fractions(&self) -> Vec<f64> {
        self.noise.etas_percent.iter().map(|e| e / 100.0).collect()
    }
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let config: ExperimentConfig = serde_json::from_str(&text)
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    config.validate()?;
    Ok(config)
}
