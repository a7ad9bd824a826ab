//! Stock layer stacks: the 6n+2 residual family and a plain MLP.

use crate::error::{Error, Result};
use crate::nn::{LayerKind, LayerSpec};

/// Residual network of depth 6n+2: one stem convolution, three stages of n
/// two-convolution blocks at widths 16/32/64 (stage transitions downsample
/// by stride 2 and zero-pad the shortcut channels), global average pooling
/// and a linear head.
pub fn build_resnet(n: usize, class_count: usize, input_shape: &[usize]) -> Result<Vec<LayerSpec>> {
    if n == 0 {
        return Err(Error::invalid("residual stage depth n must be >= 1"));
    }
    if class_count == 0 {
        return Err(Error::invalid("class_count must be positive"));
    }
    let [_, _, in_ch] = *input_shape else {
        return Err(Error::invalid(format!(
            "residual network needs [h, w, c] input, got {input_shape:?}"
        )));
    };
    let widths = [16usize, 32, 64];
    let mut layers = vec![
        LayerSpec::new(
            "stem_conv",
            LayerKind::Conv2d3x3 { in_channels: in_ch, out_channels: widths[0], stride: 1 },
        ),
        LayerSpec::new("stem_bn", LayerKind::BatchNorm { features: widths[0] }),
        LayerSpec::new("stem_relu", LayerKind::Relu),
    ];
    let mut prev_id = "stem_relu".to_string();
    let mut prev_width = widths[0];
    for (s, &width) in widths.iter().enumerate() {
        for b in 0..n {
            let stride = if s > 0 && b == 0 { 2 } else { 1 };
            let tag = format!("s{s}b{b}");
            layers.push(LayerSpec::new(
                format!("{tag}_conv1"),
                LayerKind::Conv2d3x3 { in_channels: prev_width, out_channels: width, stride },
            ));
            layers.push(LayerSpec::new(
                format!("{tag}_bn1"),
                LayerKind::BatchNorm { features: width },
            ));
            layers.push(LayerSpec::new(format!("{tag}_relu1"), LayerKind::Relu));
            layers.push(LayerSpec::new(
                format!("{tag}_conv2"),
                LayerKind::Conv2d3x3 { in_channels: width, out_channels: width, stride: 1 },
            ));
            layers.push(LayerSpec::new(
                format!("{tag}_bn2"),
                LayerKind::BatchNorm { features: width },
            ));
            layers.push(LayerSpec::new(
                format!("{tag}_add"),
                LayerKind::ResidualAdd { source: prev_id.clone() },
            ));
            layers.push(LayerSpec::new(format!("{tag}_relu2"), LayerKind::Relu));
            prev_id = format!("{tag}_relu2");
            prev_width = width;
        }
    }
    layers.push(LayerSpec::new("pool", LayerKind::GlobalAvgPool));
    layers.push(LayerSpec::new(
        "head",
        LayerKind::SoftmaxHead { in_features: widths[2], classes: class_count },
    ));
    Ok(layers)
}

/// Fully connected stack: dense+relu for each hidden width, then a linear
/// classification head.
pub fn build_mlp(
    input_features: usize,
    hidden: &[usize],
    class_count: usize,
) -> Result<Vec<LayerSpec>> {
    if input_features == 0 || class_count == 0 {
        return Err(Error::invalid("input features and class_count must be positive"));
    }
    if hidden.iter().any(|&w| w == 0) {
        return Err(Error::invalid("hidden widths must be positive"));
    }
    let mut layers = Vec::new();
    let mut prev = input_features;
    for (i, &width) in hidden.iter().enumerate() {
        layers.push(LayerSpec::new(
            format!("fc{i}"),
            LayerKind::Dense { in_features: prev, out_features: width },
        ));
        layers.push(LayerSpec::new(format!("fc{i}_relu"), LayerKind::Relu));
        prev = width;
    }
    layers.push(LayerSpec::new(
        "head",
        LayerKind::SoftmaxHead { in_features: prev, classes: class_count },
    ));
    Ok(layers)
}
