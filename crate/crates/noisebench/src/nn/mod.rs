//! Layer graph, forward inference, reverse-mode gradients and weight
//! serialization.
//!
//! A network is an ordered layer list; `residual_add` layers tap the output
//! of an earlier layer by id, which is enough to express the CIFAR-style
//! residual family. Parameters live in a name-ordered map so that every
//! iteration over them is deterministic and lexicographic.

mod backprop;
mod builders;
mod ops;
mod weights;

pub use builders::{build_mlp, build_resnet};
pub use weights::{read_weight_file, write_weight_file, RawTensor};

use std::collections::BTreeMap;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::rng::{glorot_uniform_init, RngStream};
use crate::tensor::{Scalar, Tensor};

pub(crate) const BN_EPS: f64 = 1e-5;
pub(crate) const BN_MOMENTUM: f64 = 0.9;

/// Layer kinds understood by the graph.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LayerKind {
    Dense { in_features: usize, out_features: usize },
    Conv2d3x3 { in_channels: usize, out_channels: usize, stride: usize },
    Relu,
    BatchNorm { features: usize },
    GlobalAvgPool,
    /// Adds the output of an earlier layer. When the running activation has
    /// half the spatial extent and at least as many channels as the source,
    /// the source is subsampled by stride 2 and zero-padded at the high
    /// channel end; otherwise shapes must match exactly.
    ResidualAdd { source: String },
    /// Classification head producing logits; softmax is applied by the loss.
    SoftmaxHead { in_features: usize, classes: usize },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerSpec {
    pub id: String,
    pub kind: LayerKind,
}

impl LayerSpec {
    pub fn new(id: impl Into<String>, kind: LayerKind) -> Self {
        LayerSpec { id: id.into(), kind }
    }
}

/// How a named parameter participates in training and noise injection.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamClass {
    /// Weight matrix or convolution kernel.
    Weight,
    /// Additive bias vector.
    Bias,
    /// Batchnorm scale/shift (gamma, beta).
    BatchNormParam,
    /// Non-trainable state (batchnorm running statistics).
    Buffer,
}

impl ParamClass {
    pub fn trainable(self) -> bool {
        !matches!(self, ParamClass::Buffer)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// A minibatch of examples with integer class labels.
#[derive(Debug, Clone)]
pub struct Batch<S: Scalar = f32> {
    pub inputs: Tensor<S>,
    pub labels: Vec<u32>,
}

impl<S: Scalar> Batch<S> {
    pub fn new(inputs: Tensor<S>, labels: Vec<u32>) -> Result<Self> {
        if inputs.shape().is_empty() || inputs.shape()[0] != labels.len() {
            return Err(Error::invalid(format!(
                "batch inputs {:?} do not match {} labels",
                inputs.shape(),
                labels.len()
            )));
        }
        Ok(Batch { inputs, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Gradients for the trainable parameters, keyed by parameter name.
pub type Gradients<S> = BTreeMap<String, Tensor<S>>;

/// Ordered layer graph with named parameter tensors.
#[derive(Debug, Clone)]
pub struct Network<S: Scalar = f32> {
    layers: Vec<LayerSpec>,
    params: BTreeMap<String, Tensor<S>>,
    param_classes: BTreeMap<String, ParamClass>,
    /// Resolved source layer index for residual layers.
    residual_sources: Vec<Option<usize>>,
    input_shape: Vec<usize>,
    class_count: usize,
}

/// Expected parameters of a layer: (suffix, shape, class).
fn layer_params(kind: &LayerKind) -> Vec<(&'static str, Vec<usize>, ParamClass)> {
    match kind {
        LayerKind::Dense { in_features, out_features } => vec![
            ("weight", vec![*in_features, *out_features], ParamClass::Weight),
            ("bias", vec![*out_features], ParamClass::Bias),
        ],
        LayerKind::Conv2d3x3 { in_channels, out_channels, .. } => vec![(
            "weight",
            vec![3, 3, *in_channels, *out_channels],
            ParamClass::Weight,
        )],
        LayerKind::BatchNorm { features } => vec![
            ("gamma", vec![*features], ParamClass::BatchNormParam),
            ("beta", vec![*features], ParamClass::BatchNormParam),
            ("running_mean", vec![*features], ParamClass::Buffer),
            ("running_var", vec![*features], ParamClass::Buffer),
        ],
        LayerKind::SoftmaxHead { in_features, classes } => vec![
            ("weight", vec![*in_features, *classes], ParamClass::Weight),
            ("bias", vec![*classes], ParamClass::Bias),
        ],
        _ => vec![],
    }
}

/// Glorot fans for a weight parameter, when the layer has one.
fn weight_fans(kind: &LayerKind) -> Option<(usize, usize)> {
    match kind {
        LayerKind::Dense { in_features, out_features } => Some((*in_features, *out_features)),
        LayerKind::Conv2d3x3 { in_channels, out_channels, .. } => {
            Some((9 * in_channels, 9 * out_channels))
        }
        LayerKind::SoftmaxHead { in_features, classes } => Some((*in_features, *classes)),
        _ => None,
    }
}

fn flat_features(shape: &[usize]) -> usize {
    shape.iter().product()
}

/// Output shape of a layer (batch dimension excluded).
fn infer_shape(
    spec: &LayerSpec,
    input: &[usize],
    earlier: &BTreeMap<&str, (usize, Vec<usize>)>,
) -> Result<(Vec<usize>, Option<usize>)> {
    let fail = |msg: String| Err(Error::invalid(format!("layer {:?}: {msg}", spec.id)));
    match &spec.kind {
        LayerKind::Dense { in_features, out_features } => {
            if *in_features == 0 || *out_features == 0 {
                return fail("dense dims must be positive".into());
            }
            if flat_features(input) != *in_features {
                return fail(format!(
                    "input {input:?} flattens to {} features, layer expects {in_features}",
                    flat_features(input)
                ));
            }
            Ok((vec![*out_features], None))
        }
        LayerKind::SoftmaxHead { in_features, classes } => {
            if *in_features == 0 || *classes == 0 {
                return fail("softmax_head dims must be positive".into());
            }
            if flat_features(input) != *in_features {
                return fail(format!(
                    "input {input:?} flattens to {} features, head expects {in_features}",
                    flat_features(input)
                ));
            }
            Ok((vec![*classes], None))
        }
        LayerKind::Conv2d3x3 { in_channels, out_channels, stride } => {
            if *in_channels == 0 || *out_channels == 0 {
                return fail("conv channels must be positive".into());
            }
            if !matches!(stride, 1 | 2) {
                return fail(format!("stride must be 1 or 2, got {stride}"));
            }
            let [h, w, c] = input else {
                return fail(format!("conv needs [h, w, c] input, got {input:?}"));
            };
            if c != in_channels {
                return fail(format!("input has {c} channels, kernel expects {in_channels}"));
            }
            let oh = (h - 1) / stride + 1;
            let ow = (w - 1) / stride + 1;
            Ok((vec![oh, ow, *out_channels], None))
        }
        LayerKind::Relu => Ok((input.to_vec(), None)),
        LayerKind::BatchNorm { features } => {
            if *features == 0 {
                return fail("batchnorm features must be positive".into());
            }
            match input.last() {
                Some(c) if c == features => Ok((input.to_vec(), None)),
                _ => fail(format!(
                    "batchnorm over {features} features cannot normalize input {input:?}"
                )),
            }
        }
        LayerKind::GlobalAvgPool => {
            let [_, _, c] = input else {
                return fail(format!("global_avg_pool needs [h, w, c] input, got {input:?}"));
            };
            Ok((vec![*c], None))
        }
        LayerKind::ResidualAdd { source } => {
            let Some((src_idx, src_shape)) = earlier.get(source.as_str()) else {
                return fail(format!("residual source {source:?} is not an earlier layer"));
            };
            if src_shape == input {
                return Ok((input.to_vec(), Some(*src_idx)));
            }
            // downsample + channel-pad shortcut
            if let ([sh, sw, sc], [ih, iw, ic]) = (&src_shape[..], input) {
                if *ih == (sh - 1) / 2 + 1 && *iw == (sw - 1) / 2 + 1 && ic >= sc {
                    return Ok((input.to_vec(), Some(*src_idx)));
                }
            }
            fail(format!(
                "residual source shape {src_shape:?} incompatible with input {input:?}"
            ))
        }
    }
}

impl<S: Scalar> Network<S> {
    /// Builds a network and glorot-initializes its parameters.
    ///
    /// Weight matrices and kernels are glorot-uniform, biases and batchnorm
    /// shifts zero, batchnorm scales and running variances one. Each
    /// parameter draws from a sub-stream labeled by its name, so the result
    /// does not depend on layer iteration order.
    pub fn new(
        layers: Vec<LayerSpec>,
        input_shape: &[usize],
        class_count: usize,
        rng: &RngStream,
    ) -> Result<Self> {
        let mut net = Self::validate(layers, input_shape, class_count)?;
        let mut params = BTreeMap::new();
        for spec in &net.layers {
            let fans = weight_fans(&spec.kind);
            for (suffix, shape, class) in layer_params(&spec.kind) {
                let name = format!("{}/{}", spec.id, suffix);
                let tensor = match (suffix, class) {
                    ("weight", _) => {
                        let (fan_in, fan_out) = fans.expect("weight layer has fans");
                        let mut stream = rng.substream_named(&name);
                        glorot_uniform_init(&mut stream, fan_in, fan_out, &shape)?
                    }
                    ("gamma", _) | ("running_var", _) => Tensor::ones(&shape),
                    _ => Tensor::zeros(&shape),
                };
                params.insert(name, tensor);
            }
        }
        net.params = params;
        Ok(net)
    }

    /// Builds a network around existing parameter tensors, validating names
    /// and shapes.
    pub fn from_parts(
        layers: Vec<LayerSpec>,
        params: BTreeMap<String, Tensor<S>>,
        input_shape: &[usize],
        class_count: usize,
    ) -> Result<Self> {
        let net_shell = Self::validate(layers, input_shape, class_count)?;
        for (name, expected_shape) in net_shell.expected_param_shapes() {
            match params.get(&name) {
                None => return Err(Error::invalid(format!("missing parameter {name:?}"))),
                Some(t) if t.shape() != expected_shape.as_slice() => {
                    return Err(Error::invalid(format!(
                        "parameter {name:?} has shape {:?}, expected {expected_shape:?}",
                        t.shape()
                    )))
                }
                Some(_) => {}
            }
        }
        if params.len() != net_shell.param_classes.len() {
            let extra: Vec<_> = params
                .keys()
                .filter(|k| !net_shell.param_classes.contains_key(*k))
                .collect();
            return Err(Error::invalid(format!("unexpected parameters {extra:?}")));
        }
        Ok(Network { params, ..net_shell })
    }

    fn validate(layers: Vec<LayerSpec>, input_shape: &[usize], class_count: usize) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::invalid("network needs at least one layer"));
        }
        if input_shape.is_empty() || input_shape.iter().any(|&d| d == 0) {
            return Err(Error::invalid(format!("bad input shape {input_shape:?}")));
        }
        if class_count == 0 {
            return Err(Error::invalid("class_count must be positive"));
        }
        let mut earlier: BTreeMap<&str, (usize, Vec<usize>)> = BTreeMap::new();
        let mut residual_sources = Vec::with_capacity(layers.len());
        let mut param_classes = BTreeMap::new();
        let mut current = input_shape.to_vec();
        for (idx, spec) in layers.iter().enumerate() {
            if spec.id.is_empty() {
                return Err(Error::invalid("layer id must be non-empty"));
            }
            if earlier.contains_key(spec.id.as_str()) {
                return Err(Error::invalid(format!("duplicate layer id {:?}", spec.id)));
            }
            let (out, src) = infer_shape(spec, &current, &earlier)?;
            for (suffix, _, class) in layer_params(&spec.kind) {
                param_classes.insert(format!("{}/{}", spec.id, suffix), class);
            }
            residual_sources.push(src);
            earlier.insert(spec.id.as_str(), (idx, out.clone()));
            current = out;
        }
        if let Some(LayerKind::SoftmaxHead { classes, .. }) = layers.last().map(|l| &l.kind) {
            if *classes != class_count {
                return Err(Error::invalid(format!(
                    "softmax head produces {classes} classes, network declares {class_count}"
                )));
            }
        }
        Ok(Network {
            layers,
            params: BTreeMap::new(),
            param_classes,
            residual_sources,
            input_shape: input_shape.to_vec(),
            class_count,
        })
    }

    fn expected_param_shapes(&self) -> Vec<(String, Vec<usize>)> {
        let mut out = Vec::new();
        for spec in &self.layers {
            for (suffix, shape, _) in layer_params(&spec.kind) {
                out.push((format!("{}/{}", spec.id, suffix), shape));
            }
        }
        out
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn params(&self) -> &BTreeMap<String, Tensor<S>> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut BTreeMap<String, Tensor<S>> {
        &mut self.params
    }

    pub fn param_class(&self, name: &str) -> Option<ParamClass> {
        self.param_classes.get(name).copied()
    }

    /// Parameter names in lexicographic order, trainable only.
    pub fn trainable_names(&self) -> Vec<String> {
        self.param_classes
            .iter()
            .filter(|(_, c)| c.trainable())
            .map(|(n, _)| n.clone())
            .collect()
    }

    /// Total number of trainable scalar parameters.
    pub fn num_trainable(&self) -> usize {
        self.param_classes
            .iter()
            .filter(|(_, c)| c.trainable())
            .map(|(n, _)| self.params[n].len())
            .sum()
    }

    /// Number of layers carrying weight tensors (the "depth" in the 6n+2
    /// counting convention).
    pub fn weighted_layer_count(&self) -> usize {
        self.layers
            .iter()
            .filter(|l| {
                matches!(
                    l.kind,
                    LayerKind::Dense { .. }
                        | LayerKind::Conv2d3x3 { .. }
                        | LayerKind::SoftmaxHead { .. }
                )
            })
            .count()
    }

    fn check_input(&self, inputs: &Tensor<S>) -> Result<usize> {
        let shape = inputs.shape();
        if shape.len() != self.input_shape.len() + 1 || shape[1..] != self.input_shape[..] {
            return Err(Error::invalid(format!(
                "input shape {:?} does not match [batch, {:?}]",
                shape, self.input_shape
            )));
        }
        if shape[0] == 0 {
            return Err(Error::invalid("empty batch"));
        }
        Ok(shape[0])
    }

    /// Runs the network, returning logits `[batch, class_count]` (or the
    /// last layer's output for headless graphs).
    ///
    /// Pure in both modes: `Train` uses batch statistics in batchnorm
    /// layers without touching the running statistics (only
    /// [`Network::train_batch`] updates them).
    pub fn forward(&self, inputs: &Tensor<S>, mode: Mode) -> Result<Tensor<S>> {
        self.check_input(inputs)?;
        let tape = backprop::run_forward(self, inputs, mode)?;
        Ok(tape.into_output())
    }

    /// Mean categorical cross-entropy of a batch. Pure.
    pub fn loss(&self, batch: &Batch<S>, mode: Mode) -> Result<f64> {
        self.check_batch(batch)?;
        let logits = self.forward(&batch.inputs, mode)?;
        let (loss, _) = backprop::softmax_cross_entropy(&logits, &batch.labels)?;
        Ok(loss)
    }

    /// Loss plus exact reverse-mode gradients for every trainable
    /// parameter. Pure; running statistics are left untouched.
    pub fn loss_and_grads(&self, batch: &Batch<S>, mode: Mode) -> Result<(f64, Gradients<S>)> {
        let (loss, grads, _) = backprop::loss_and_grads_inner(self, batch, mode)?;
        Ok((loss, grads))
    }

    /// Training step bookkeeping: train-mode loss and gradients, with
    /// batchnorm running statistics advanced under momentum
    /// `BN_MOMENTUM`. The caller applies the optimizer update.
    pub fn train_batch(&mut self, batch: &Batch<S>) -> Result<(f64, Gradients<S>)> {
        let (loss, grads, bn_updates) = backprop::loss_and_grads_inner(self, batch, Mode::Train)?;
        for (layer_idx, mean, var) in bn_updates {
            let id = self.layers[layer_idx].id.clone();
            self.blend_buffer(&format!("{id}/running_mean"), &mean);
            self.blend_buffer(&format!("{id}/running_var"), &var);
        }
        Ok((loss, grads))
    }

    fn blend_buffer(&mut self, name: &str, batch_stat: &[f64]) {
        let buf = self.params.get_mut(name).expect("buffer exists");
        for (b, &s) in buf.data_mut().iter_mut().zip(batch_stat) {
            *b = S::from_f64(BN_MOMENTUM * b.to_f64() + (1.0 - BN_MOMENTUM) * s);
        }
    }

    pub(crate) fn check_batch(&self, batch: &Batch<S>) -> Result<()> {
        if batch.is_empty() {
            return Err(Error::invalid("empty batch"));
        }
        self.check_input(&batch.inputs)?;
        if let Some(&bad) = batch.labels.iter().find(|&&l| l as usize >= self.class_count) {
            return Err(Error::invalid(format!(
                "label {bad} out of range [0, {})",
                self.class_count
            )));
        }
        Ok(())
    }

    /// Fraction of examples whose argmax logit matches the label, evaluated
    /// in eval mode over fixed-size chunks. Ties resolve to the lowest
    /// class index.
    pub fn accuracy(&self, data: &Dataset<S>, batch_size: usize) -> Result<f64> {
        if data.len() == 0 {
            return Err(Error::invalid("accuracy: empty dataset"));
        }
        if batch_size == 0 {
            return Err(Error::invalid("accuracy: batch_size must be positive"));
        }
        let mut correct = 0usize;
        let mut seen = 0usize;
        let n = data.len();
        while seen < n {
            let hi = (seen + batch_size).min(n);
            let idx: Vec<usize> = (seen..hi).collect();
            let batch = data.gather(&idx)?;
            let logits = self.forward(&batch.inputs, Mode::Eval)?;
            correct += count_correct(&logits, &batch.labels);
            seen = hi;
        }
        Ok(correct as f64 / n as f64)
    }

    /// Bitwise equality of all parameter tensors.
    pub fn params_bits_eq(&self, other: &Self) -> bool {
        self.params.len() == other.params.len()
            && self
                .params
                .iter()
                .zip(other.params.iter())
                .all(|((na, ta), (nb, tb))| na == nb && ta.bits_eq(tb))
    }
}

/// Argmax per row with lowest-index tie-break, compared against labels.
pub(crate) fn count_correct<S: Scalar>(logits: &Tensor<S>, labels: &[u32]) -> usize {
    let classes = *logits.shape().last().expect("logits have a class axis");
    let mut correct = 0;
    for (row, &label) in logits.data().chunks_exact(classes).zip(labels) {
        let mut best = 0usize;
        for (j, v) in row.iter().enumerate().skip(1) {
            if *v > row[best] {
                best = j;
            }
        }
        if best == label as usize {
            correct += 1;
        }
    }
    correct
}
