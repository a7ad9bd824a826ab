//! Taped forward pass and reverse-mode gradient accumulation.

use crate::error::{Error, Result};
use crate::nn::ops::{self, BnCache};
use crate::nn::{Batch, Gradients, LayerKind, Mode, Network};
use crate::tensor::{Scalar, Tensor};

pub(crate) struct Tape<S: Scalar> {
    /// Output of each layer, in layer order.
    acts: Vec<Tensor<S>>,
    /// Train-mode batchnorm caches, indexed by layer.
    bn: Vec<Option<BnCache>>,
}

impl<S: Scalar> Tape<S> {
    pub(crate) fn into_output(mut self) -> Tensor<S> {
        self.acts.pop().expect("network has at least one layer")
    }
}

fn param<'a, S: Scalar>(net: &'a Network<S>, id: &str, suffix: &str) -> &'a Tensor<S> {
    net.params()
        .get(&format!("{id}/{suffix}"))
        .expect("validated networks carry all parameters")
}

pub(crate) fn run_forward<S: Scalar>(
    net: &Network<S>,
    inputs: &Tensor<S>,
    mode: Mode,
) -> Result<Tape<S>> {
    let n = inputs.shape()[0];
    let mut acts: Vec<Tensor<S>> = Vec::with_capacity(net.layers().len());
    let mut bn: Vec<Option<BnCache>> = Vec::with_capacity(net.layers().len());
    for (idx, spec) in net.layers().iter().enumerate() {
        let x = if idx == 0 { inputs } else { &acts[idx - 1] };
        let mut cache = None;
        let y = match &spec.kind {
            LayerKind::Dense { in_features, .. } => {
                let flat = x.reshaped(&[n, *in_features]).expect("features validated at build");
                ops::dense_forward(&flat, param(net, &spec.id, "weight"), param(net, &spec.id, "bias"))
            }
            LayerKind::SoftmaxHead { in_features, .. } => {
                let flat = x.reshaped(&[n, *in_features]).expect("features validated at build");
                ops::dense_forward(&flat, param(net, &spec.id, "weight"), param(net, &spec.id, "bias"))
            }
            LayerKind::Conv2d3x3 { stride, .. } => {
                ops::conv3x3_forward(x, param(net, &spec.id, "weight"), *stride)
            }
            LayerKind::Relu => ops::relu_forward(x),
            LayerKind::BatchNorm { .. } => {
                let gamma = param(net, &spec.id, "gamma");
                let beta = param(net, &spec.id, "beta");
                match mode {
                    Mode::Train => {
                        let (y, c) = ops::batchnorm_forward_train(x, gamma, beta);
                        cache = Some(c);
                        y
                    }
                    Mode::Eval => ops::batchnorm_forward_eval(
                        x,
                        gamma,
                        beta,
                        param(net, &spec.id, "running_mean"),
                        param(net, &spec.id, "running_var"),
                    ),
                }
            }
            LayerKind::GlobalAvgPool => ops::gap_forward(x),
            LayerKind::ResidualAdd { .. } => {
                let src_idx = net.residual_sources[idx].expect("residual source resolved");
                // x borrows acts, so the sum is built against a clone of x.
                let xc = x.clone();
                ops::residual_forward(&xc, &acts[src_idx])
            }
        };
        acts.push(y);
        bn.push(cache);
    }
    Ok(Tape { acts, bn })
}

/// Mean cross-entropy between softmax(logits) and integer labels, plus the
/// gradient with respect to the logits. Uses the log-sum-exp form, so large
/// logit magnitudes do not overflow.
pub(crate) fn softmax_cross_entropy<S: Scalar>(
    logits: &Tensor<S>,
    labels: &[u32],
) -> Result<(f64, Tensor<S>)> {
    let [n, classes] = *logits.shape() else {
        return Err(Error::invalid(format!(
            "loss needs [batch, classes] logits, got {:?}",
            logits.shape()
        )));
    };
    if labels.len() != n {
        return Err(Error::invalid(format!("{n} logit rows but {} labels", labels.len())));
    }
    let ld = logits.data();
    let mut dlogits = vec![S::ZERO; ld.len()];
    let mut total = 0.0f64;
    let inv_n = 1.0 / n as f64;
    for (r, &label) in labels.iter().enumerate() {
        let row = &ld[r * classes..(r + 1) * classes];
        let max = row.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v.to_f64()));
        let mut z = 0.0f64;
        for &v in row {
            z += (v.to_f64() - max).exp();
        }
        let log_z = max + z.ln();
        total += log_z - row[label as usize].to_f64();
        for (c, &v) in row.iter().enumerate() {
            let p = (v.to_f64() - log_z).exp();
            let ind = if c == label as usize { 1.0 } else { 0.0 };
            dlogits[r * classes + c] = S::from_f64((p - ind) * inv_n);
        }
    }
    Ok((total * inv_n, Tensor::assemble(logits.shape(), dlogits)))
}

fn add_into<S: Scalar>(slot: &mut Option<Tensor<S>>, delta: Tensor<S>) {
    match slot {
        None => *slot = Some(delta),
        Some(t) => {
            for (a, &b) in t.data_mut().iter_mut().zip(delta.data()) {
                *a = *a + b;
            }
        }
    }
}

type BnUpdates = Vec<(usize, Vec<f64>, Vec<f64>)>;

/// Loss, parameter gradients, and (in train mode) per-layer batch
/// statistics for the batchnorm running-average update.
pub(crate) fn loss_and_grads_inner<S: Scalar>(
    net: &Network<S>,
    batch: &Batch<S>,
    mode: Mode,
) -> Result<(f64, Gradients<S>, BnUpdates)> {
    net.check_batch(batch)?;
    let n = batch.len();
    let tape = run_forward(net, &batch.inputs, mode)?;
    let logits = tape.acts.last().expect("network has at least one layer");
    let (loss, dlogits) = softmax_cross_entropy(logits, &batch.labels)?;

    let layer_count = net.layers().len();
    let mut dacts: Vec<Option<Tensor<S>>> = vec![None; layer_count];
    dacts[layer_count - 1] = Some(dlogits);
    let mut grads = Gradients::new();
    let mut dinput: Option<Tensor<S>> = None;

    for idx in (0..layer_count).rev() {
        let spec = &net.layers()[idx];
        let dy = dacts[idx].take().expect("every layer output feeds the chain");
        let x = if idx == 0 { &batch.inputs } else { &tape.acts[idx - 1] };
        let dx = match &spec.kind {
            LayerKind::Dense { in_features, .. } | LayerKind::SoftmaxHead { in_features, .. } => {
                let flat = x.reshaped(&[n, *in_features]).expect("features validated at build");
                let w = param(net, &spec.id, "weight");
                let (dxf, dw, db) = ops::dense_backward(&flat, w, &dy);
                grads.insert(format!("{}/weight", spec.id), dw);
                grads.insert(format!("{}/bias", spec.id), db);
                dxf.reshaped(x.shape()).expect("round trip through the flat view")
            }
            LayerKind::Conv2d3x3 { stride, .. } => {
                let w = param(net, &spec.id, "weight");
                let (dx, dw) = ops::conv3x3_backward(x, w, &dy, *stride);
                grads.insert(format!("{}/weight", spec.id), dw);
                dx
            }
            LayerKind::Relu => ops::relu_backward(x, &dy),
            LayerKind::BatchNorm { .. } => {
                let gamma = param(net, &spec.id, "gamma");
                let (dx, dgamma, dbeta) = match &tape.bn[idx] {
                    Some(cache) => ops::batchnorm_backward_train(cache, gamma, &dy, x.shape()),
                    None => ops::batchnorm_backward_eval(
                        x,
                        gamma,
                        param(net, &spec.id, "running_mean"),
                        param(net, &spec.id, "running_var"),
                        &dy,
                    ),
                };
                grads.insert(format!("{}/gamma", spec.id), dgamma);
                grads.insert(format!("{}/beta", spec.id), dbeta);
                dx
            }
            LayerKind::GlobalAvgPool => ops::gap_backward(x.shape(), &dy),
            LayerKind::ResidualAdd { .. } => {
                let src_idx = net.residual_sources[idx].expect("residual source resolved");
                let dsrc = ops::residual_backward_src(&dy, tape.acts[src_idx].shape());
                add_into(&mut dacts[src_idx], dsrc);
                dy
            }
        };
        if idx == 0 {
            add_into(&mut dinput, dx);
        } else {
            add_into(&mut dacts[idx - 1], dx);
        }
    }

    let bn_updates = tape
        .bn
        .into_iter()
        .enumerate()
        .filter_map(|(idx, c)| c.map(|c| (idx, c.mean, c.var)))
        .collect();
    Ok((loss, grads, bn_updates))
}
