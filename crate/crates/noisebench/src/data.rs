//! Datasets: CIFAR-10 binary parsing, synthetic Gaussian clusters, a
//! checksummed on-disk container, and train-time augmentation.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use crate::error::{DataFormatError, Error, Result};
use crate::nn::{read_weight_file, write_weight_file, Batch};
use crate::rng::RngStream;
use crate::tensor::{Scalar, Tensor};

const CIFAR_RECORD: usize = 3073;
const CIFAR_SIDE: usize = 32;
const CIFAR_CLASSES: u32 = 10;

/// Labeled examples with a known class count. Inputs are stored as one
/// tensor whose first axis indexes examples.
#[derive(Debug, Clone)]
pub struct Dataset<S: Scalar = f32> {
    inputs: Tensor<S>,
    labels: Vec<u32>,
    class_count: usize,
}

impl<S: Scalar> Dataset<S> {
    pub fn new(inputs: Tensor<S>, labels: Vec<u32>, class_count: usize) -> Result<Self> {
        if inputs.shape().is_empty() || inputs.shape()[0] != labels.len() {
            return Err(Error::invalid(format!(
                "inputs {:?} do not match {} labels",
                inputs.shape(),
                labels.len()
            )));
        }
        if class_count == 0 {
            return Err(Error::invalid("class_count must be positive"));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l as usize >= class_count) {
            return Err(Error::invalid(format!("label {bad} out of range [0, {class_count})")));
        }
        Ok(Dataset { inputs, labels, class_count })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn inputs(&self) -> &Tensor<S> {
        &self.inputs
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    /// Shape of one example (no leading batch axis).
    pub fn example_shape(&self) -> &[usize] {
        &self.inputs.shape()[1..]
    }

    /// Copies the rows at `indices` into a batch, in the given order.
    pub fn gather(&self, indices: &[usize]) -> Result<Batch<S>> {
        if indices.is_empty() {
            return Err(Error::invalid("cannot gather an empty batch"));
        }
        let row = self.inputs.len() / self.len().max(1);
        let mut data = Vec::with_capacity(indices.len() * row);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            if i >= self.len() {
                return Err(Error::invalid(format!(
                    "index {i} out of range for {} examples",
                    self.len()
                )));
            }
            data.extend_from_slice(&self.inputs.data()[i * row..(i + 1) * row]);
            labels.push(self.labels[i]);
        }
        let mut shape = vec![indices.len()];
        shape.extend_from_slice(self.example_shape());
        Batch::new(Tensor::assemble(&shape, data), labels)
    }

    /// The whole dataset as one batch.
    pub fn full_batch(&self) -> Result<Batch<S>> {
        let idx: Vec<usize> = (0..self.len()).collect();
        self.gather(&idx)
    }
}

/// Options for the CIFAR-10 binary loader.
#[derive(Debug, Clone, Default)]
pub struct CifarOptions {
    /// Keep at most this many examples per split.
    pub subset: Option<usize>,
    /// Subtract per-channel means (computed on the loaded training split)
    /// from both splits.
    pub center: bool,
}

fn parse_cifar_file<S: Scalar>(
    path: &Path,
    pixels: &mut Vec<S>,
    labels: &mut Vec<u32>,
    cap: Option<usize>,
) -> Result<()> {
    if let Some(c) = cap {
        if labels.len() >= c {
            return Ok(());
        }
    }
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() % CIFAR_RECORD != 0 {
        return Err(DataFormatError::BadRecordLength {
            path: path.to_path_buf(),
            len: bytes.len(),
            offset: bytes.len() - bytes.len() % CIFAR_RECORD,
        }
        .into());
    }
    let plane = CIFAR_SIDE * CIFAR_SIDE;
    for (rec, chunk) in bytes.chunks_exact(CIFAR_RECORD).enumerate() {
        if let Some(c) = cap {
            if labels.len() >= c {
                break;
            }
        }
        let label = chunk[0];
        if label as u32 >= CIFAR_CLASSES {
            return Err(DataFormatError::BadLabel {
                path: path.to_path_buf(),
                value: label,
                offset: rec * CIFAR_RECORD,
            }
            .into());
        }
        labels.push(label as u32);
        // Three channel planes to interleaved [h, w, c], scaled to [0, 1].
        let planes = &chunk[1..];
        for y in 0..CIFAR_SIDE {
            for x in 0..CIFAR_SIDE {
                for c in 0..3 {
                    let v = planes[c * plane + y * CIFAR_SIDE + x];
                    pixels.push(S::from_f64(v as f64 / 255.0));
                }
            }
        }
    }
    Ok(())
}

fn center_channels<S: Scalar>(means: &[f64; 3], data: &mut [S]) {
    for (i, v) in data.iter_mut().enumerate() {
        *v = S::from_f64(v.to_f64() - means[i % 3]);
    }
}

/// Loads the canonical CIFAR-10 binary batches from `dir`
/// (`data_batch_1..5.bin` for training, `test_batch.bin` for test).
pub fn load_cifar10_binary<S: Scalar>(
    dir: &Path,
    options: &CifarOptions,
) -> Result<(Dataset<S>, Dataset<S>)> {
    let mut train_pixels: Vec<S> = Vec::new();
    let mut train_labels = Vec::new();
    for i in 1..=5 {
        parse_cifar_file(
            &dir.join(format!("data_batch_{i}.bin")),
            &mut train_pixels,
            &mut train_labels,
            options.subset,
        )?;
    }
    let mut test_pixels: Vec<S> = Vec::new();
    let mut test_labels = Vec::new();
    parse_cifar_file(&dir.join("test_batch.bin"), &mut test_pixels, &mut test_labels, options.subset)?;
    if options.center && !train_pixels.is_empty() {
        let mut means = [0.0f64; 3];
        for (i, v) in train_pixels.iter().enumerate() {
            means[i % 3] += v.to_f64();
        }
        let per = (train_pixels.len() / 3) as f64;
        for m in &mut means {
            *m /= per;
        }
        center_channels(&means, &mut train_pixels);
        center_channels(&means, &mut test_pixels);
    }
    let shape = |n: usize| [n, CIFAR_SIDE, CIFAR_SIDE, 3];
    Ok((
        Dataset::new(
            Tensor::assemble(&shape(train_labels.len()), train_pixels),
            train_labels,
            CIFAR_CLASSES as usize,
        )?,
        Dataset::new(
            Tensor::assemble(&shape(test_labels.len()), test_pixels),
            test_labels,
            CIFAR_CLASSES as usize,
        )?,
    ))
}

/// Gaussian class clusters with centroids `separation` apart (axis-aligned
/// while `classes <= dim`, random unit directions beyond that), unit
/// within-class spread, split 80/20 per class.
pub fn generate_synthetic<S: Scalar>(
    classes: usize,
    dim: usize,
    per_class: usize,
    separation: f64,
    seed: u64,
) -> Result<(Dataset<S>, Dataset<S>)> {
    if classes < 2 {
        return Err(Error::invalid("need at least 2 classes"));
    }
    if dim == 0 || per_class == 0 {
        return Err(Error::invalid("dim and per_class must be positive"));
    }
    if !separation.is_finite() || separation < 0.0 {
        return Err(Error::invalid("separation must be finite and non-negative"));
    }
    let rng = RngStream::new(seed);
    // Axis-aligned centroids scaled so pairwise distance equals
    // `separation`; extra classes fall back to random unit directions.
    let scale = separation / 2.0f64.sqrt();
    let mut centroids = Vec::with_capacity(classes);
    let mut cstream = rng.substream_named("centroids");
    for k in 0..classes {
        let mut c = vec![0.0f64; dim];
        if k < dim {
            c[k] = scale;
        } else {
            let mut norm = 0.0;
            for v in c.iter_mut() {
                let (g, _) = cstream.next_gaussian_pair();
                *v = g;
                norm += g * g;
            }
            let norm = norm.sqrt().max(1e-12);
            for v in c.iter_mut() {
                *v = *v / norm * scale;
            }
        }
        centroids.push(c);
    }

    let test_per_class = per_class / 5;
    let train_per_class = per_class - test_per_class;
    let mut tr_data = Vec::with_capacity(classes * train_per_class * dim);
    let mut tr_labels = Vec::with_capacity(classes * train_per_class);
    let mut te_data = Vec::with_capacity(classes * test_per_class * dim);
    let mut te_labels = Vec::with_capacity(classes * test_per_class);
    for (k, centroid) in centroids.iter().enumerate() {
        let mut stream = rng.substream_named(&format!("class{k}"));
        for e in 0..per_class {
            let (data, labels) = if e < train_per_class {
                (&mut tr_data, &mut tr_labels)
            } else {
                (&mut te_data, &mut te_labels)
            };
            for &cv in centroid {
                let (g, _) = stream.next_gaussian_pair();
                data.push(S::from_f64(cv + g));
            }
            labels.push(k as u32);
        }
    }
    let tr_n = tr_labels.len();
    let te_n = te_labels.len();
    Ok((
        Dataset::new(Tensor::assemble(&[tr_n, dim], tr_data), tr_labels, classes)?,
        Dataset::new(Tensor::assemble(&[te_n, dim], te_data), te_labels, classes)?,
    ))
}

/// Reassigns `fraction` of the labels (rounded to the nearest count) to a
/// different class chosen uniformly; a flip never keeps the old label. The
/// flipped subset and replacements are drawn entirely from `rng`.
pub fn flip_labels<S: Scalar>(data: &Dataset<S>, fraction: f64, rng: &RngStream) -> Result<Dataset<S>> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(Error::invalid(format!("label flip fraction must be in [0, 1], got {fraction}")));
    }
    let n = data.len();
    let classes = data.class_count();
    let m = (fraction * n as f64).round() as usize;
    if m > 0 && classes < 2 {
        return Err(Error::invalid("label flips need at least 2 classes"));
    }
    let mut labels = data.labels().to_vec();
    let mut stream = rng.substream_named("flip");
    let mut order: Vec<usize> = (0..n).collect();
    for i in 0..m {
        let j = i + stream.next_below((n - i) as u64) as usize;
        order.swap(i, j);
        let old = labels[order[i]];
        let r = stream.next_below(classes as u64 - 1) as u32;
        labels[order[i]] = r + u32::from(r >= old);
    }
    Dataset::new(data.inputs().clone(), labels, classes)
}

fn labels_to_tensor<S: Scalar>(labels: &[u32]) -> Tensor<S> {
    Tensor::assemble(&[labels.len()], labels.iter().map(|&l| S::from_f64(l as f64)).collect())
}

fn tensor_to_labels<S: Scalar>(path: &Path, t: &Tensor<S>, class_count: usize) -> Result<Vec<u32>> {
    let mut out = Vec::with_capacity(t.len());
    for &v in t.data() {
        let f = v.to_f64();
        if f < 0.0 || f.fract() != 0.0 || f >= class_count as f64 {
            return Err(DataFormatError::BadContainer {
                path: path.to_path_buf(),
                msg: format!("label value {f} is not an integer in [0, {class_count})"),
            }
            .into());
        }
        out.push(f as u32);
    }
    Ok(out)
}

/// Writes a train/test pair into the checksummed tensor container.
pub fn save_dataset<S: Scalar>(path: &Path, train: &Dataset<S>, test: &Dataset<S>) -> Result<()> {
    if train.class_count() != test.class_count() {
        return Err(Error::invalid("train/test class counts differ"));
    }
    let mut tensors: BTreeMap<String, Tensor<S>> = BTreeMap::new();
    tensors.insert("meta/class_count".into(), Tensor::assemble(&[1], vec![S::from_f64(train.class_count() as f64)]));
    tensors.insert("train/inputs".into(), train.inputs.clone());
    tensors.insert("train/labels".into(), labels_to_tensor(&train.labels));
    tensors.insert("test/inputs".into(), test.inputs.clone());
    tensors.insert("test/labels".into(), labels_to_tensor(&test.labels));
    write_weight_file(path, &tensors)
}

/// Reads a train/test pair written by [`save_dataset`].
pub fn load_dataset<S: Scalar>(path: &Path) -> Result<(Dataset<S>, Dataset<S>)> {
    let raw = read_weight_file(path)?;
    let mut by_name: BTreeMap<String, Tensor<S>> = BTreeMap::new();
    for rt in raw {
        let name = rt.name.clone();
        by_name.insert(name, rt.decode::<S>()?);
    }
    let mut get = |name: &str| -> Result<Tensor<S>> {
        by_name.remove(name).ok_or_else(|| {
            DataFormatError::MissingTensor { path: path.to_path_buf(), name: name.into() }.into()
        })
    };
    let meta = get("meta/class_count")?;
    let class_count = meta.data().first().map(|v| v.to_f64()).unwrap_or(0.0);
    if class_count < 1.0 || class_count.fract() != 0.0 {
        return Err(DataFormatError::BadContainer {
            path: path.to_path_buf(),
            msg: format!("bad class_count {class_count}"),
        }
        .into());
    }
    let class_count = class_count as usize;
    let tr_inputs = get("train/inputs")?;
    let tr_labels = tensor_to_labels(path, &get("train/labels")?, class_count)?;
    let te_inputs = get("test/inputs")?;
    let te_labels = tensor_to_labels(path, &get("test/labels")?, class_count)?;
    Ok((
        Dataset::new(tr_inputs, tr_labels, class_count)?,
        Dataset::new(te_inputs, te_labels, class_count)?,
    ))
}

/// Maximum augmentation shift in pixels, each axis.
pub const AUGMENT_SHIFT: usize = 4;

/// Applies one example's augmentation: optional horizontal flip, then a
/// shift by (dy, dx) with zero fill. `img` is one `[h, w, c]` example.
pub fn augment_one<S: Scalar>(img: &[S], shape: &[usize], flip: bool, dy: i64, dx: i64) -> Vec<S> {
    let [h, w, c] = *shape else { panic!("augment_one needs [h, w, c]") };
    let mut out = vec![S::ZERO; img.len()];
    for y in 0..h {
        let sy = y as i64 - dy;
        if sy < 0 || sy as usize >= h {
            continue;
        }
        for x in 0..w {
            let sx = x as i64 - dx;
            if sx < 0 || sx as usize >= w {
                continue;
            }
            let sx = if flip { w - 1 - sx as usize } else { sx as usize };
            let src = (sy as usize * w + sx) * c;
            let dst = (y * w + x) * c;
            out[dst..dst + c].copy_from_slice(&img[src..src + c]);
        }
    }
    out
}

/// Per-example random horizontal flip (p = 0.5) and shift of up to
/// [`AUGMENT_SHIFT`] pixels on each spatial axis. Labels pass through.
pub fn augment<S: Scalar>(batch: &Batch<S>, rng: &mut RngStream) -> Result<Batch<S>> {
    let shape = batch.inputs.shape();
    let [n, h, w, c] = *shape else {
        return Err(Error::invalid(format!(
            "augmentation needs [n, h, w, c] image inputs, got {shape:?}"
        )));
    };
    let row = h * w * c;
    let span = 2 * AUGMENT_SHIFT as u64 + 1;
    let mut data = Vec::with_capacity(batch.inputs.len());
    for i in 0..n {
        let flip = rng.next_bool();
        let dy = rng.next_below(span) as i64 - AUGMENT_SHIFT as i64;
        let dx = rng.next_below(span) as i64 - AUGMENT_SHIFT as i64;
        let img = &batch.inputs.data()[i * row..(i + 1) * row];
        data.extend(augment_one(img, &shape[1..], flip, dy, dx));
    }
    Batch::new(Tensor::assemble(shape, data), batch.labels.clone())
}
