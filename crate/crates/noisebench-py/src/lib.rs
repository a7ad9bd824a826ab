//! Python bindings for the core library: datasets, networks, training,
//! weight-noise evaluation and the gradient-noise bound check.

use std::path::PathBuf;

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use noisebench::config::load_config;
use noisebench::data;
use noisebench::gradnoise::{check_bound, GradNoiseConfig, Sampling};
use noisebench::nn::{build_mlp, build_resnet, Mode};
use noisebench::noise::{self, NoiseSpec, NoiseSweepResult};
use noisebench::optim::{OptimizerConfig, OptimizerKind};
use noisebench::report::SweepRow;
use noisebench::sweep::{sweep_learning_rates, sweep_optimizers};
use noisebench::train::train_network;
use noisebench::{Error, RngStream};

fn pyerr(e: Error) -> PyErr {
    match &e {
        Error::Io { .. } => PyIOError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

/// Labeled examples with a fixed class count.
#[pyclass(name = "Dataset")]
struct PyDataset {
    inner: data::Dataset<f32>,
}

#[pymethods]
impl PyDataset {
    fn __len__(&self) -> usize {
        self.inner.len()
    }

    #[getter]
    fn class_count(&self) -> usize {
        self.inner.class_count()
    }

    #[getter]
    fn example_shape(&self) -> Vec<usize> {
        self.inner.example_shape().to_vec()
    }

    fn labels(&self) -> Vec<u32> {
        self.inner.labels().to_vec()
    }

    fn __repr__(&self) -> String {
        format!(
            "Dataset({} examples, {} classes, shape {:?})",
            self.inner.len(),
            self.inner.class_count(),
            self.inner.example_shape(),
        )
    }
}

/// A feed-forward classifier with named parameter tensors.
#[pyclass(name = "Network")]
struct PyNetwork {
    inner: noisebench::nn::Network<f32>,
}

#[pymethods]
impl PyNetwork {
    /// Fully connected ReLU stack; `hidden=[]` gives plain softmax
    /// regression.
    #[staticmethod]
    #[pyo3(signature = (input_shape, hidden, classes, seed=0))]
    fn mlp(input_shape: Vec<usize>, hidden: Vec<usize>, classes: usize, seed: u64) -> PyResult<Self> {
        let features = input_shape.iter().product();
        let layers = build_mlp(features, &hidden, classes).map_err(pyerr)?;
        let rng = RngStream::new(seed).substream_named("init");
        let inner =
            noisebench::nn::Network::new(layers, &input_shape, classes, &rng).map_err(pyerr)?;
        Ok(PyNetwork { inner })
    }

    /// Residual network of depth 6n+2 over channels-last images.
    #[staticmethod]
    #[pyo3(signature = (n, classes, input_shape, seed=0))]
    fn resnet(n: usize, classes: usize, input_shape: Vec<usize>, seed: u64) -> PyResult<Self> {
        let layers = build_resnet(n, classes, &input_shape).map_err(pyerr)?;
        let rng = RngStream::new(seed).substream_named("init");
        let inner =
            noisebench::nn::Network::new(layers, &input_shape, classes, &rng).map_err(pyerr)?;
        Ok(PyNetwork { inner })
    }

    fn num_trainable(&self) -> usize {
        self.inner.num_trainable()
    }

    #[pyo3(signature = (data, batch_size=256))]
    fn accuracy(&self, data: &PyDataset, batch_size: usize) -> PyResult<f64> {
        self.inner.accuracy(&data.inner, batch_size).map_err(pyerr)
    }

    /// Mean loss over the whole set, in evaluation mode.
    fn loss(&self, data: &PyDataset) -> PyResult<f64> {
        let batch = data.inner.full_batch().map_err(pyerr)?;
        self.inner.loss(&batch, Mode::Eval).map_err(pyerr)
    }

    /// Trains in place for a fixed epoch budget; returns the per-epoch
    /// history as a dict.
    #[pyo3(signature = (train, test, learning_rate, epochs, batch_size, optimizer="sgd", augmentation=false, seed=0))]
    #[allow(clippy::too_many_arguments)]
    fn train<'py>(
        &mut self,
        py: Python<'py>,
        train: &PyDataset,
        test: &PyDataset,
        learning_rate: f64,
        epochs: usize,
        batch_size: usize,
        optimizer: &str,
        augmentation: bool,
        seed: u64,
    ) -> PyResult<Bound<'py, PyDict>> {
        let kind = OptimizerKind::parse(optimizer).map_err(pyerr)?;
        let config = OptimizerConfig::new(kind, learning_rate).map_err(pyerr)?;
        let rng = RngStream::new(seed).substream_named("train");
        let history = train_network(
            &mut self.inner,
            &train.inner,
            &test.inner,
            &config,
            epochs,
            batch_size,
            augmentation,
            &rng,
        )
        .map_err(pyerr)?;
        let out = PyDict::new(py);
        out.set_item("train_loss", history.train_loss)?;
        out.set_item("train_acc", history.train_acc)?;
        out.set_item("test_acc", history.test_acc)?;
        out.set_item("wall_time_secs", history.wall_time_secs)?;
        Ok(out)
    }

    fn save_weights(&self, path: PathBuf) -> PyResult<()> {
        self.inner.save_weights(&path).map_err(pyerr)
    }

    fn load_weights(&mut self, path: PathBuf) -> PyResult<()> {
        self.inner.load_weights(&path).map_err(pyerr)
    }

    /// True when every parameter tensor matches bit for bit.
    fn params_bits_eq(&self, other: &PyNetwork) -> bool {
        self.inner.params_bits_eq(&other.inner)
    }

    fn copy(&self) -> PyNetwork {
        PyNetwork { inner: self.inner.clone() }
    }

    fn __repr__(&self) -> String {
        format!("Network({} trainable parameters)", self.inner.num_trainable())
    }
}

/// Gaussian blob classification task; returns (train, test).
#[pyfunction]
#[pyo3(signature = (classes, dim, per_class, separation, seed=0))]
fn generate_synthetic(
    classes: usize,
    dim: usize,
    per_class: usize,
    separation: f64,
    seed: u64,
) -> PyResult<(PyDataset, PyDataset)> {
    let (train, test) =
        data::generate_synthetic::<f32>(classes, dim, per_class, separation, seed).map_err(pyerr)?;
    Ok((PyDataset { inner: train }, PyDataset { inner: test }))
}

/// Reassigns a fraction of the labels to a different class, uniformly
/// and deterministically in `seed`.
#[pyfunction]
fn flip_labels(data: &PyDataset, fraction: f64, seed: u64) -> PyResult<PyDataset> {
    let rng = RngStream::new(seed).substream_named("label-noise");
    Ok(PyDataset { inner: data::flip_labels(&data.inner, fraction, &rng).map_err(pyerr)? })
}

#[pyfunction]
fn save_dataset(path: PathBuf, train: &PyDataset, test: &PyDataset) -> PyResult<()> {
    data::save_dataset(&path, &train.inner, &test.inner).map_err(pyerr)
}

#[pyfunction]
fn load_dataset(path: PathBuf) -> PyResult<(PyDataset, PyDataset)> {
    let (train, test) = data::load_dataset::<f32>(&path).map_err(pyerr)?;
    Ok((PyDataset { inner: train }, PyDataset { inner: test }))
}

fn spec(
    eta: f64,
    trials: usize,
    seed: u64,
    include_biases: bool,
    include_batchnorm: bool,
) -> PyResult<NoiseSpec> {
    let mut spec =
        NoiseSpec::new(eta, trials, RngStream::new(seed).substream_named("noise")).map_err(pyerr)?;
    spec.include_biases = include_biases;
    spec.include_batchnorm = include_batchnorm;
    Ok(spec)
}

/// One noisy copy of the network: every selected tensor gets additive
/// Gaussian noise with standard deviation `eta` times its own scale.
#[pyfunction]
#[pyo3(signature = (net, eta, seed=0, trial=0, include_biases=false, include_batchnorm=false))]
fn inject_noise(
    net: &PyNetwork,
    eta: f64,
    seed: u64,
    trial: u64,
    include_biases: bool,
    include_batchnorm: bool,
) -> PyResult<PyNetwork> {
    let spec = spec(eta, 1, seed, include_biases, include_batchnorm)?;
    Ok(PyNetwork { inner: noise::inject_noise(&net.inner, &spec, trial).map_err(pyerr)? })
}

fn sweep_dict<'py>(py: Python<'py>, sweep: &NoiseSweepResult) -> PyResult<Bound<'py, PyDict>> {
    let out = PyDict::new(py);
    out.set_item("baseline_acc", sweep.baseline_acc)?;
    let mut points = Vec::with_capacity(sweep.points.len());
    for p in &sweep.points {
        let d = PyDict::new(py);
        d.set_item("eta", p.eta)?;
        d.set_item("trials", p.per_trial_acc.len())?;
        d.set_item("mean_acc", p.mean_acc)?;
        d.set_item("std_acc", p.std_acc)?;
        d.set_item("per_trial_acc", p.per_trial_acc.clone())?;
        points.push(d);
    }
    out.set_item("points", points)?;
    out.set_item("normalized", sweep.normalized.clone())?;
    out.set_item("avg_normalized", sweep.avg_normalized)?;
    Ok(out)
}

/// Accuracy under increasing weight noise. `etas` are fractions, not
/// percent; eta 0 reuses the noiseless baseline.
#[pyfunction]
#[pyo3(signature = (net, data, etas, trials=20, seed=0, include_biases=false, include_batchnorm=false))]
fn noise_sweep<'py>(
    py: Python<'py>,
    net: &PyNetwork,
    data: &PyDataset,
    etas: Vec<f64>,
    trials: usize,
    seed: u64,
    include_biases: bool,
    include_batchnorm: bool,
) -> PyResult<Bound<'py, PyDict>> {
    let template = spec(0.0, trials, seed, include_biases, include_batchnorm)?;
    let sweep = noise::noise_sweep(&net.inner, &data.inner, &etas, &template).map_err(pyerr)?;
    sweep_dict(py, &sweep)
}

#[pyfunction]
fn average_normalized_accuracy(normalized: Vec<f64>) -> PyResult<f64> {
    noise::average_normalized_accuracy(&normalized).map_err(pyerr)
}

/// Empirical minibatch update-noise power against its ceiling
/// alpha^2 C / batch_size; returns the full measurement as a dict.
#[pyfunction]
#[pyo3(signature = (net, data, alpha, batch_size, samples=1000, sampling="with", seed=0))]
fn gradient_noise<'py>(
    py: Python<'py>,
    net: &PyNetwork,
    data: &PyDataset,
    alpha: f64,
    batch_size: usize,
    samples: usize,
    sampling: &str,
    seed: u64,
) -> PyResult<Bound<'py, PyDict>> {
    let config = GradNoiseConfig {
        alpha,
        batch_size,
        sample_count: samples,
        sampling: Sampling::parse(sampling).map_err(pyerr)?,
        rng: RngStream::new(seed).substream_named("gradnoise"),
    };
    let report = check_bound(&net.inner, &data.inner, &config).map_err(pyerr)?;
    let out = PyDict::new(py);
    out.set_item("full_grad_norm", report.full_grad_norm)?;
    out.set_item("c", report.c)?;
    out.set_item("empirical_noise_power", report.empirical_noise_power)?;
    out.set_item("theoretical_bound", report.theoretical_bound)?;
    out.set_item("bound_satisfied", report.bound_satisfied)?;
    out.set_item("relative_gap", report.relative_gap)?;
    Ok(out)
}

fn row_dict<'py>(py: Python<'py>, row: &SweepRow) -> PyResult<Bound<'py, PyDict>> {
    let out = PyDict::new(py);
    out.set_item("model", row.model.clone())?;
    out.set_item("dataset", row.dataset.clone())?;
    out.set_item("learning_rate", row.learning_rate)?;
    out.set_item("optimizer", row.optimizer.clone())?;
    out.set_item("seed", row.seed)?;
    out.set_item("baseline_acc", row.baseline_acc)?;
    let mut points = Vec::with_capacity(row.points.len());
    for p in &row.points {
        let d = PyDict::new(py);
        d.set_item("eta", p.eta)?;
        d.set_item("trials", p.trials)?;
        d.set_item("mean_acc", p.mean_acc)?;
        d.set_item("std_acc", p.std_acc)?;
        points.push(d);
    }
    out.set_item("points", points)?;
    out.set_item("normalized", row.normalized.clone())?;
    out.set_item("avg_normalized", row.avg_normalized)?;
    Ok(out)
}

/// Full experiment from a config file: one row per learning rate
/// (`axis="lr"`) or per optimizer kind (`axis="opt"`). Writes
/// results.csv and summary.json to the config's output directory and
/// returns the rows.
#[pyfunction]
#[pyo3(signature = (config_path, axis="lr"))]
fn run_sweep<'py>(
    py: Python<'py>,
    config_path: PathBuf,
    axis: &str,
) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let config = load_config(&config_path).map_err(pyerr)?;
    let report = match axis {
        "lr" => sweep_learning_rates(&config).map_err(pyerr)?,
        "opt" => sweep_optimizers(&config).map_err(pyerr)?,
        other => {
            return Err(PyValueError::new_err(format!(
                "axis must be \"lr\" or \"opt\", got {other:?}"
            )))
        }
    };
    report.rows.iter().map(|row| row_dict(py, row)).collect()
}

#[pymodule]
fn noisebench_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyDataset>()?;
    m.add_class::<PyNetwork>()?;
    m.add_function(wrap_pyfunction!(generate_synthetic, m)?)?;
    m.add_function(wrap_pyfunction!(flip_labels, m)?)?;
    m.add_function(wrap_pyfunction!(save_dataset, m)?)?;
    m.add_function(wrap_pyfunction!(load_dataset, m)?)?;
    m.add_function(wrap_pyfunction!(inject_noise, m)?)?;
    m.add_function(wrap_pyfunction!(noise_sweep, m)?)?;
    m.add_function(wrap_pyfunction!(average_normalized_accuracy, m)?)?;
    m.add_function(wrap_pyfunction!(gradient_noise, m)?)?;
    m.add_function(wrap_pyfunction!(run_sweep, m)?)?;
    Ok(())
}
