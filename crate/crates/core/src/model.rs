//! Classifier interface and a small multilayer perceptron with a softmax
//! head, trained by momentum SGD with optional transform augmentation.
//!
//! Weight files: `"GLCW"`, version (u32 LE), input shape and class count
//! (u32 LE each), layer count (u32 LE), per layer a kind byte (0 dense,
//! 1 ReLU) and for dense layers `inputs`/`outputs` (u32 LE), the parameter
//! count (u64 LE), then every parameter as f64 LE — for each dense layer its
//! row-major `outputs × inputs` weights followed by its bias.

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::density::{sample_y, SmoothingSpec};
use crate::error::{domain, Error, Result};
use crate::rng::derive_seed;
use crate::tensor::{Image, LabeledDataset};

const MAGIC: &[u8; 4] = b"GLCW";
const FORMAT_VERSION: u32 = 1;

/// Maps an image to per-class confidences in [0, 1].
pub trait Classifier: Sync {
    fn num_classes(&self) -> usize;

    /// `(height, width, channels)`.
    fn input_shape(&self) -> (usize, usize, usize);

    fn forward_batch(&self, xs: &[Image<f64>]) -> Result<Vec<Vec<f64>>>;

    fn forward(&self, x: &Image<f64>) -> Result<Vec<f64>> {
        Ok(self.forward_batch(std::slice::from_ref(x))?.remove(0))
    }

    fn predict(&self, x: &Image<f64>) -> Result<usize> {
        Ok(argmax(&self.forward(x)?))
    }
}

pub fn argmax(v: &[f64]) -> usize {
    v.iter()
        .enumerate()
        .fold(
            (0, f64::NEG_INFINITY),
            |best, (i, &x)| if x > best.1 { (i, x) } else { best },
        )
        .0
}

#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    /// `y = W x + b` with `W` of shape `outputs × inputs`.
    Dense {
        weights: Array2<f64>,
        bias: Array1<f64>,
    },
    Relu,
}

impl Layer {
    fn params(&self) -> usize {
        match self {
            Layer::Dense { weights, bias } => weights.len() + bias.len(),
            Layer::Relu => 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    input_shape: (usize, usize, usize),
    num_classes: usize,
    layers: Vec<Layer>,
}

fn softmax_rows(mut logits: Array2<f64>) -> Array2<f64> {
    for mut row in logits.rows_mut() {
        let top = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        row.mapv_inplace(|v| (v - top).exp());
        let s = row.sum();
        row.mapv_inplace(|v| v / s);
    }
    logits
}

impl Mlp {
    /// Dense–ReLU stack with He-normal weights and zero biases.
    pub fn new(input_shape: (usize, usize, usize), hidden: &[usize], num_classes: usize, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut widths = vec![input_shape.0 * input_shape.1 * input_shape.2];
        widths.extend_from_slice(hidden);
        widths.push(num_classes);
        let mut layers = Vec::new();
        for (k, w) in widths.windows(2).enumerate() {
            let (n_in, n_out) = (w[0], w[1]);
            let dist = Normal::new(0.0, (2.0 / n_in.max(1) as f64).sqrt()).map_err(|e| Error::Domain(e.to_string()))?;
            let weights = Array2::from_shape_fn((n_out, n_in), |_| dist.sample(&mut rng));
            layers.push(Layer::Dense {
                weights,
                bias: Array1::zeros(n_out),
            });
            if k + 2 < widths.len() {
                layers.push(Layer::Relu);
            }
        }
        Self::from_layers(input_shape, num_classes, layers)
    }

    pub fn from_layers(input_shape: (usize, usize, usize), num_classes: usize, layers: Vec<Layer>) -> Result<Self> {
        let mut width = input_shape.0 * input_shape.1 * input_shape.2;
        if width == 0 || num_classes < 2 {
            return domain("a classifier needs a non-empty input and at least two classes");
        }
        for layer in &layers {
            if let Layer::Dense { weights, bias } = layer {
                if weights.ncols() != width || bias.len() != weights.nrows() {
                    return domain(format!("dense layer {:?} does not accept width {width}", weights.dim()));
                }
                width = weights.nrows();
            }
        }
        if width != num_classes {
            return domain(format!("network emits {width} logits for {num_classes} classes"));
        }
        Ok(Self {
            input_shape,
            num_classes,
            layers,
        })
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(Layer::params).sum()
    }

    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for layer in &self.layers {
            if let Layer::Dense { weights, bias } = layer {
                out.extend(weights.iter());
                out.extend(bias.iter());
            }
        }
        out
    }

    fn params_mut(&mut self) -> Vec<&mut f64> {
        let mut out = Vec::new();
        for layer in &mut self.layers {
            if let Layer::Dense { weights, bias } = layer {
                out.extend(weights.iter_mut());
                out.extend(bias.iter_mut());
            }
        }
        out
    }

    pub fn set_params(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.num_params() {
            return domain(format!(
                "{} parameters for a model with {}",
                values.len(),
                self.num_params()
            ));
        }
        for (p, v) in self.params_mut().into_iter().zip(values) {
            *p = *v;
        }
        Ok(())
    }

    fn batch_matrix(&self, xs: &[Image<f64>]) -> Result<Array2<f64>> {
        let width = self.input_shape.0 * self.input_shape.1 * self.input_shape.2;
        let mut data = Vec::with_capacity(xs.len() * width);
        for x in xs {
            if x.shape() != self.input_shape {
                return domain(format!(
                    "image shape {:?}, model expects {:?}",
                    x.shape(),
                    self.input_shape
                ));
            }
            data.extend_from_slice(x.data());
        }
        Array2::from_shape_vec((xs.len(), width), data).map_err(|e| Error::Domain(e.to_string()))
    }

    /// Activations entering each layer, followed by the logits.
    fn activations(&self, x: Array2<f64>) -> Vec<Array2<f64>> {
        let mut acts = vec![x];
        for layer in &self.layers {
            let a = acts.last().expect("input present");
            let next = match layer {
                Layer::Dense { weights, bias } => a.dot(&weights.t()) + bias,
                Layer::Relu => a.mapv(|v| v.max(0.0)),
            };
            acts.push(next);
        }
        acts
    }

    /// Mean cross-entropy and its gradient in [`params`](Self::params) order.
    pub fn loss_and_gradient(&self, xs: &[Image<f64>], labels: &[usize]) -> Result<(f64, Vec<f64>)> {
        if xs.len() != labels.len() || xs.is_empty() {
            return domain("need one label per image and a non-empty batch");
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= self.num_classes) {
            return domain(format!("label {bad} out of range"));
        }
        let acts = self.activations(self.batch_matrix(xs)?);
        let probs = softmax_rows(acts.last().expect("logits").clone());
        let b = xs.len() as f64;
        let loss = labels
            .iter()
            .enumerate()
            .map(|(i, &l)| -probs[(i, l)].max(f64::MIN_POSITIVE).ln())
            .sum::<f64>()
            / b;
        let mut delta = probs;
        for (i, &l) in labels.iter().enumerate() {
            delta[(i, l)] -= 1.0;
        }
        delta.mapv_inplace(|v| v / b);
        let mut grads: Vec<Vec<f64>> = Vec::new();
        for (k, layer) in self.layers.iter().enumerate().rev() {
            match layer {
                Layer::Dense { weights, .. } => {
                    let gw = delta.t().dot(&acts[k]);
                    let gb = delta.sum_axis(Axis(0));
                    let mut g: Vec<f64> = gw.iter().cloned().collect();
                    g.extend(gb.iter());
                    grads.push(g);
                    delta = delta.dot(weights);
                }
                Layer::Relu => {
                    delta.zip_mut_with(&acts[k], |d, &a| {
                        if a <= 0.0 {
                            *d = 0.0
                        }
                    });
                }
            }
        }
        Ok((loss, grads.into_iter().rev().flatten().collect()))
    }

    pub fn accuracy(&self, data: &LabeledDataset) -> Result<f64> {
        if data.is_empty() {
            return Ok(0.0);
        }
        let mut hits = 0;
        for (chunk, labels) in data.images().chunks(256).zip(data.labels().chunks(256)) {
            let out = self.forward_batch(chunk)?;
            hits += out.iter().zip(labels).filter(|(p, &l)| argmax(p) == l).count();
        }
        Ok(hits as f64 / data.len() as f64)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(64 + 8 * self.num_params());
        out.extend_from_slice(MAGIC);
        let (h, w, c) = self.input_shape;
        for v in [
            FORMAT_VERSION,
            h as u32,
            w as u32,
            c as u32,
            self.num_classes as u32,
            self.layers.len() as u32,
        ] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for layer in &self.layers {
            match layer {
                Layer::Dense { weights, .. } => {
                    out.push(0);
                    out.extend_from_slice(&(weights.ncols() as u32).to_le_bytes());
                    out.extend_from_slice(&(weights.nrows() as u32).to_le_bytes());
                }
                Layer::Relu => out.push(1),
            }
        }
        out.extend_from_slice(&(self.num_params() as u64).to_le_bytes());
        for p in self.params() {
            out.extend_from_slice(&p.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(Error::Format("not a weight file (bad magic)".into()));
        }
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(Error::Format(format!("unsupported weight format version {version}")));
        }
        let shape = (r.u32()? as usize, r.u32()? as usize, r.u32()? as usize);
        let classes = r.u32()? as usize;
        let n_layers = r.u32()? as usize;
        let mut layers = Vec::with_capacity(n_layers.min(1024));
        for _ in 0..n_layers {
            match r.take(1)?[0] {
                0 => {
                    let (n_in, n_out) = (r.u32()? as usize, r.u32()? as usize);
                    layers.push(Layer::Dense {
                        weights: Array2::zeros((n_out, n_in)),
                        bias: Array1::zeros(n_out),
                    });
                }
                1 => layers.push(Layer::Relu),
                k => return Err(Error::Format(format!("unknown layer kind {k}"))),
            }
        }
        let mut model = Self::from_layers(shape, classes, layers).map_err(|e| Error::Format(e.to_string()))?;
        let count = r.u64()? as usize;
        if count != model.num_params() {
            return Err(Error::Format(format!(
                "{count} parameters declared, architecture has {}",
                model.num_params()
            )));
        }
        let raw = r.take(8 * count)?;
        if r.pos != bytes.len() {
            return Err(Error::Format("trailing bytes after parameters".into()));
        }
        let values: Vec<f64> = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        model.set_params(&values)?;
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::Format(format!("weight file truncated at byte {}", self.pos)))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

impl Classifier for Mlp {
    fn num_classes(&self) -> usize {
        self.num_classes
    }

    fn input_shape(&self) -> (usize, usize, usize) {
        self.input_shape
    }

    fn forward_batch(&self, xs: &[Image<f64>]) -> Result<Vec<Vec<f64>>> {
        if xs.is_empty() {
            return Ok(Vec::new());
        }
        let logits = self.activations(self.batch_matrix(xs)?).pop().expect("logits");
        Ok(softmax_rows(logits).rows().into_iter().map(|r| r.to_vec()).collect())
    }
}

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
    /// Each training image is replaced by a fresh smoothing sample
    /// (clamped to [0, 1]) every time it is visited.
    pub augmentation: Option<SmoothingSpec>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 5,
            learning_rate: 0.05,
            momentum: 0.9,
            batch_size: 64,
            augmentation: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub loss: f64,
    /// Accuracy on the (augmented) batches seen during the epoch.
    pub accuracy: f64,
}

pub fn train_augmented(
    model: &mut Mlp,
    data: &LabeledDataset,
    config: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochStats),
) -> Result<Vec<EpochStats>> {
    if data.is_empty() || config.batch_size == 0 {
        return domain("training needs data and a positive batch size");
    }
    if !(config.learning_rate > 0.0) || !(0.0..1.0).contains(&config.momentum) {
        return domain("learning rate must be positive and momentum in [0, 1)");
    }
    if data.num_classes() != model.num_classes() {
        return domain("dataset and model disagree on the number of classes");
    }
    if let Some(spec) = &config.augmentation {
        spec.validate()?;
    }
    let mut velocity = vec![0.0; model.num_params()];
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut history = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let epoch_seed = derive_seed(config.seed, epoch as u64);
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(epoch_seed));
        let (mut loss_sum, mut hits) = (0.0, 0usize);
        for batch in order.chunks(config.batch_size) {
            let images = batch
                .iter()
                .map(|&i| {
                    let x = &data.images()[i];
                    match &config.augmentation {
                        None => Ok(x.clone()),
                        Some(spec) => {
                            let draw = spec.draw(epoch_seed, i as u64, x.len());
                            Ok(sample_y(spec, x, &draw.alpha, &draw.noise)?.clamp_unit())
                        }
                    }
                })
                .collect::<Result<Vec<_>>>()?;
            let labels: Vec<usize> = batch.iter().map(|&i| data.labels()[i]).collect();
            let out = model.forward_batch(&images)?;
            hits += out.iter().zip(&labels).filter(|(p, &l)| argmax(p) == l).count();
            let (loss, grad) = model.loss_and_gradient(&images, &labels)?;
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::Training(format!("non-finite loss or gradient in epoch {epoch}")));
            }
            loss_sum += loss * batch.len() as f64;
            for ((p, v), g) in model.params_mut().into_iter().zip(velocity.iter_mut()).zip(&grad) {
                *v = config.momentum * *v - config.learning_rate * g;
                *p += *v;
            }
        }
        let stats = EpochStats {
            epoch,
            loss: loss_sum / data.len() as f64,
            accuracy: hits as f64 / data.len() as f64,
        };
        log::info!("epoch {epoch}: loss {:.4}, accuracy {:.4}", stats.loss, stats.accuracy);
        on_epoch(&stats);
        history.push(stats);
    }
    Ok(history)
}
