use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adam::AdamState;
use super::batchnorm::{BatchNorm, BnCache};
use super::data::Dataset;
use super::layers::{
    conv2d_backward, conv2d_forward, dense_backward, dense_forward, BinarizeMode, BinaryCache, BinaryKind,
    BinaryLayer, ConvGeometry, Param,
};
use super::BnnError;
use crate::expr::{ActivationFn, ChannelActivation};
use crate::tensor::Tensor;

/// One entry of a model description.
///
/// Binary layers are full blocks: `AF → clip → sign → binary op → batch
/// norm`, followed by an identity shortcut from the block input when
/// `shortcut` is set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LayerSpec {
    Conv(ConvGeometry),
    Dense {
        in_features: usize,
        out_features: usize,
    },
    BatchNorm {
        channels: usize,
    },
    BinaryConv {
        geometry: ConvGeometry,
        shortcut: bool,
    },
    BinaryDense {
        in_features: usize,
        out_features: usize,
        shortcut: bool,
    },
    Flatten,
}

impl LayerSpec {
    fn is_binary(&self) -> bool {
        matches!(self, LayerSpec::BinaryConv { .. } | LayerSpec::BinaryDense { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    /// Per-sample input shape: `[C, H, W]` for conv stems, `[F]` for dense.
    pub input_shape: Vec<usize>,
    pub classes: usize,
    pub t_clip: f32,
    pub layers: Vec<LayerSpec>,
}

impl ModelSpec {
    /// Conv stem, batch norm, two binary conv blocks with shortcuts, dense head.
    pub fn tiny_bin_net(input_shape: [usize; 3], classes: usize, width: usize) -> Self {
        let [c, h, w] = input_shape;
        let block = |cin| LayerSpec::BinaryConv {
            geometry: ConvGeometry {
                in_channels: cin,
                out_channels: width,
                kernel: 3,
                stride: 1,
                padding: 1,
            },
            shortcut: true,
        };
        ModelSpec {
            input_shape: input_shape.to_vec(),
            classes,
            t_clip: 1.0,
            layers: vec![
                LayerSpec::Conv(ConvGeometry {
                    in_channels: c,
                    out_channels: width,
                    kernel: 3,
                    stride: 1,
                    padding: 1,
                }),
                LayerSpec::BatchNorm { channels: width },
                block(width),
                block(width),
                LayerSpec::Flatten,
                LayerSpec::Dense {
                    in_features: width * h * w,
                    out_features: classes,
                },
            ],
        }
    }

    /// Dense variant of [`ModelSpec::tiny_bin_net`] for flat inputs.
    pub fn tiny_bin_mlp(features: usize, classes: usize, hidden: usize) -> Self {
        let block = LayerSpec::BinaryDense {
            in_features: hidden,
            out_features: hidden,
            shortcut: true,
        };
        ModelSpec {
            input_shape: vec![features],
            classes,
            t_clip: 1.0,
            layers: vec![
                LayerSpec::Dense {
                    in_features: features,
                    out_features: hidden,
                },
                LayerSpec::BatchNorm { channels: hidden },
                block.clone(),
                block,
                LayerSpec::Dense {
                    in_features: hidden,
                    out_features: classes,
                },
            ],
        }
    }

    /// Checks structure and shape flow; returns the per-sample output shape
    /// of every layer.
    pub fn validate(&self) -> Result<Vec<Vec<usize>>, BnnError> {
        let err = |m: String| Err(BnnError::Spec(m));
        if self.classes < 2 {
            return err(format!("need at least 2 classes, got {}", self.classes));
        }
        if !(self.t_clip > 0.0) {
            return err(format!("t_clip must be positive, got {}", self.t_clip));
        }
        match (self.layers.first(), self.layers.last()) {
            (Some(LayerSpec::Conv(_) | LayerSpec::Dense { .. }), Some(LayerSpec::Dense { out_features, .. }))
                if *out_features == self.classes => {}
            _ => {
                return err(
                    "first layer must be a full-precision conv or dense and the last a dense layer \
                     with one output per class"
                        .into(),
                )
            }
        }
        let mut shape = self.input_shape.clone();
        if shape.is_empty() || shape.contains(&0) {
            return err(format!("bad input shape {shape:?}"));
        }
        let mut shapes = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter().enumerate() {
            let conv_out = |g: &ConvGeometry, shape: &[usize]| -> Result<Vec<usize>, BnnError> {
                match *shape {
                    [c, h, w] if c == g.in_channels => {
                        let (oh, ow) = g.output_hw(h, w)?;
                        Ok(vec![g.out_channels, oh, ow])
                    }
                    _ => Err(BnnError::Spec(format!("layer {i}: conv expects [{}, H, W], got {shape:?}", g.in_channels))),
                }
            };
            let dense_out = |inf: usize, outf: usize, shape: &[usize]| -> Result<Vec<usize>, BnnError> {
                if shape == [inf] {
                    Ok(vec![outf])
                } else {
                    Err(BnnError::Spec(format!("layer {i}: dense expects [{inf}], got {shape:?}")))
                }
            };
            let next = match layer {
                LayerSpec::Conv(g) => conv_out(g, &shape)?,
                LayerSpec::BinaryConv { geometry, .. } => conv_out(geometry, &shape)?,
                LayerSpec::Dense {
                    in_features,
                    out_features,
                }
                | LayerSpec::BinaryDense {
                    in_features,
                    out_features,
                    ..
                } => dense_out(*in_features, *out_features, &shape)?,
                LayerSpec::BatchNorm { channels } => {
                    if shape[0] != *channels {
                        return err(format!("layer {i}: batch norm over {channels} channels, input {shape:?}"));
                    }
                    shape.clone()
                }
                LayerSpec::Flatten => vec![shape.iter().product()],
            };
            let shortcut = matches!(
                layer,
                LayerSpec::BinaryConv { shortcut: true, .. } | LayerSpec::BinaryDense { shortcut: true, .. }
            );
            if shortcut && next != shape {
                return err(format!("layer {i}: shortcut needs matching shapes, {shape:?} -> {next:?}"));
            }
            if layer.is_binary() && (i == 0 || i + 1 == self.layers.len()) {
                return err(format!("layer {i}: first and last layers stay full precision"));
            }
            shape = next;
            shapes.push(shape.clone());
        }
        Ok(shapes)
    }
}

#[derive(Debug, Clone)]
pub enum Layer {
    Conv {
        geometry: ConvGeometry,
        weight: Param,
        bias: Param,
    },
    Dense {
        in_features: usize,
        out_features: usize,
        weight: Param,
        bias: Param,
    },
    BatchNorm(BatchNorm),
    Binary {
        layer: BinaryLayer,
        bn: BatchNorm,
        shortcut: bool,
    },
    Flatten,
}

#[derive(Debug, Clone)]
pub enum LayerCache {
    Input(Tensor),
    BatchNorm(BnCache),
    Binary(BinaryCache, BnCache),
    Flatten(Vec<usize>),
}

#[derive(Debug, Clone)]
pub struct Model {
    spec: ModelSpec,
    pub layers: Vec<Layer>,
    pub mode: BinarizeMode,
}

fn reshape_first(x: Tensor, rest: &[usize]) -> Result<Tensor, BnnError> {
    let mut shape = vec![x.shape()[0]];
    shape.extend_from_slice(rest);
    Ok(x.reshape(&shape, 1)?)
}

impl Model {
    /// Builds a model with Kaiming-uniform weights drawn from `seed`.
    pub fn new(spec: ModelSpec, seed: u64) -> Result<Self, BnnError> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut layers = Vec::with_capacity(spec.layers.len());
        for ls in &spec.layers {
            let conv_w = |g: &ConvGeometry, rng: &mut ChaCha8Rng| {
                let fan_in = g.in_channels * g.kernel * g.kernel;
                Param::kaiming_uniform(&[g.out_channels, g.in_channels, g.kernel, g.kernel], fan_in, rng)
            };
            layers.push(match ls {
                LayerSpec::Conv(g) => Layer::Conv {
                    geometry: *g,
                    weight: conv_w(g, &mut rng),
                    bias: Param::zeros(&[g.out_channels]),
                },
                LayerSpec::Dense {
                    in_features,
                    out_features,
                } => Layer::Dense {
                    in_features: *in_features,
                    out_features: *out_features,
                    weight: Param::kaiming_uniform(&[*out_features, *in_features], *in_features, &mut rng),
                    bias: Param::zeros(&[*out_features]),
                },
                LayerSpec::BatchNorm { channels } => Layer::BatchNorm(BatchNorm::new(*channels)),
                LayerSpec::BinaryConv { geometry, shortcut } => Layer::Binary {
                    layer: BinaryLayer::new(BinaryKind::Conv2d(*geometry), conv_w(geometry, &mut rng), spec.t_clip)?,
                    bn: BatchNorm::new(geometry.out_channels),
                    shortcut: *shortcut,
                },
                LayerSpec::BinaryDense {
                    in_features,
                    out_features,
                    shortcut,
                } => Layer::Binary {
                    layer: BinaryLayer::new(
                        BinaryKind::Dense {
                            in_features: *in_features,
                            out_features: *out_features,
                        },
                        Param::kaiming_uniform(&[*out_features, *in_features], *in_features, &mut rng),
                        spec.t_clip,
                    )?,
                    bn: BatchNorm::new(*out_features),
                    shortcut: *shortcut,
                },
                LayerSpec::Flatten => Layer::Flatten,
            });
        }
        Ok(Model {
            spec,
            layers,
            mode: BinarizeMode::Sign,
        })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    /// Installs `af` (re-initialized per block) in every binary block.
    pub fn set_af(&mut self, af: Option<&ActivationFn>) -> Result<(), BnnError> {
        for l in self.layers.iter_mut() {
            if let Layer::Binary { layer, .. } = l {
                layer.set_af(af)?;
            }
        }
        Ok(())
    }

    fn check_input(&self, x: &Tensor) -> Result<(), BnnError> {
        if x.shape().len() != self.spec.input_shape.len() + 1 || x.shape()[1..] != self.spec.input_shape[..] {
            return Err(BnnError::Geometry(format!(
                "model expects [N, {:?}] input, got {:?}",
                self.spec.input_shape,
                x.shape()
            )));
        }
        Ok(())
    }

    /// Training-mode forward pass (batch statistics) with caches for
    /// [`Model::backward`].
    pub fn forward_train(&mut self, x: &Tensor) -> Result<(Tensor, Vec<LayerCache>), BnnError> {
        self.check_input(x)?;
        let mode = self.mode;
        let mut h = x.clone();
        let mut caches = Vec::with_capacity(self.layers.len());
        for layer in self.layers.iter_mut() {
            let (out, cache) = match layer {
                Layer::Conv { geometry, weight, bias } => (
                    conv2d_forward(&h, &weight.value, Some(&bias.value), geometry)?,
                    LayerCache::Input(h),
                ),
                Layer::Dense {
                    in_features,
                    out_features,
                    weight,
                    bias,
                } => (
                    dense_forward(&h, &weight.value, Some(&bias.value), *in_features, *out_features)?,
                    LayerCache::Input(h),
                ),
                Layer::BatchNorm(bn) => {
                    let (y, c) = bn.forward_train(&h)?;
                    (y, LayerCache::BatchNorm(c))
                }
                Layer::Binary { layer, bn, shortcut } => {
                    let (z, bc) = layer.forward(&h, mode)?;
                    let (mut y, nc) = bn.forward_train(&z)?;
                    if *shortcut {
                        for (a, b) in y.data_mut().iter_mut().zip(h.data()) {
                            *a += b;
                        }
                    }
                    (y, LayerCache::Binary(bc, nc))
                }
                Layer::Flatten => {
                    let rest = h.shape()[1..].to_vec();
                    let n = rest.iter().product::<usize>();
                    (reshape_first(h, &[n])?, LayerCache::Flatten(rest))
                }
            };
            h = out;
            caches.push(cache);
        }
        Ok((h, caches))
    }

    /// Inference forward pass using running batch-norm statistics.
    pub fn forward_eval(&self, x: &Tensor) -> Result<Tensor, BnnError> {
        self.check_input(x)?;
        let mut h = x.clone();
        for layer in &self.layers {
            h = match layer {
                Layer::Conv { geometry, weight, bias } => conv2d_forward(&h, &weight.value, Some(&bias.value), geometry)?,
                Layer::Dense {
                    in_features,
                    out_features,
                    weight,
                    bias,
                } => dense_forward(&h, &weight.value, Some(&bias.value), *in_features, *out_features)?,
                Layer::BatchNorm(bn) => bn.forward_eval(&h)?,
                Layer::Binary { layer, bn, shortcut } => {
                    let (z, _) = layer.forward(&h, self.mode)?;
                    let mut y = bn.forward_eval(&z)?;
                    if *shortcut {
                        for (a, b) in y.data_mut().iter_mut().zip(h.data()) {
                            *a += b;
                        }
                    }
                    y
                }
                Layer::Flatten => {
                    let n = h.shape()[1..].iter().product::<usize>();
                    reshape_first(h, &[n])?
                }
            };
        }
        Ok(h)
    }

    /// Accumulates parameter gradients for `grad_logits`; returns the input
    /// gradient.
    pub fn backward(&mut self, caches: &[LayerCache], grad_logits: &Tensor) -> Result<Tensor, BnnError> {
        if caches.len() != self.layers.len() {
            return Err(BnnError::Geometry("cache does not belong to this model".into()));
        }
        let mut g = grad_logits.clone();
        for (layer, cache) in self.layers.iter_mut().zip(caches).rev() {
            g = match (layer, cache) {
                (Layer::Conv { geometry, weight, bias }, LayerCache::Input(x)) => {
                    let (dx, dw, db) = conv2d_backward(x, &weight.value, &g, geometry)?;
                    accumulate(&mut weight.grad, &dw);
                    accumulate(&mut bias.grad, &db);
                    dx
                }
                (
                    Layer::Dense {
                        in_features,
                        out_features,
                        weight,
                        bias,
                    },
                    LayerCache::Input(x),
                ) => {
                    let (dx, dw, db) = dense_backward(x, &weight.value, &g, *in_features, *out_features)?;
                    accumulate(&mut weight.grad, &dw);
                    accumulate(&mut bias.grad, &db);
                    dx
                }
                (Layer::BatchNorm(bn), LayerCache::BatchNorm(c)) => bn.backward(c, &g)?,
                (Layer::Binary { layer, bn, shortcut }, LayerCache::Binary(bc, nc)) => {
                    let dz = bn.backward(nc, &g)?;
                    let mut dx = layer.backward(bc, &dz)?;
                    if *shortcut {
                        accumulate(dx.data_mut(), g.data());
                    }
                    dx
                }
                (Layer::Flatten, LayerCache::Flatten(rest)) => reshape_first(g, rest)?,
                _ => return Err(BnnError::Geometry("cache does not belong to this model".into())),
            };
        }
        Ok(g)
    }

    pub fn zero_grad(&mut self) {
        for (_, g) in self.params_mut() {
            g.fill(0.0);
        }
    }

    /// Every learnable tensor with its gradient, in a fixed order.
    pub fn params_mut(&mut self) -> Vec<(&mut [f32], &mut [f32])> {
        let mut out: Vec<(&mut [f32], &mut [f32])> = Vec::new();
        for layer in self.layers.iter_mut() {
            match layer {
                Layer::Conv { weight, bias, .. } | Layer::Dense { weight, bias, .. } => {
                    out.push(push(weight));
                    out.push(push(bias));
                }
                Layer::BatchNorm(bn) => {
                    out.push(push(&mut bn.gamma));
                    out.push(push(&mut bn.beta));
                }
                Layer::Binary { layer, bn, .. } => {
                    let BinaryLayer {
                        weight, af, af_grads, ..
                    } = layer;
                    out.push(push(weight));
                    if let Some(af) = af {
                        for (v, g) in af.params_mut().iter_mut().zip(af_grads.iter_mut()) {
                            out.push((&mut v[..], &mut g[..]));
                        }
                    }
                    out.push(push(&mut bn.gamma));
                    out.push(push(&mut bn.beta));
                }
                Layer::Flatten => {}
            }
        }
        out
    }

    /// All persistent tensors (parameters and running statistics) with
    /// their shapes, in checkpoint order.
    pub fn state(&self) -> Vec<(Vec<usize>, &[f32])> {
        let mut out: Vec<(Vec<usize>, &[f32])> = Vec::new();
        for layer in &self.layers {
            match layer {
                Layer::Conv { weight, bias, .. } | Layer::Dense { weight, bias, .. } => {
                    out.push((weight.shape.clone(), &weight.value));
                    out.push((bias.shape.clone(), &bias.value));
                }
                Layer::BatchNorm(bn) => push_bn(bn, &mut out),
                Layer::Binary { layer, bn, .. } => {
                    out.push((layer.weight.shape.clone(), &layer.weight.value));
                    if let Some(af) = &layer.af {
                        for p in af.params() {
                            out.push((vec![p.len()], p));
                        }
                    }
                    push_bn(bn, &mut out);
                }
                Layer::Flatten => {}
            }
        }
        out
    }

    /// Mutable view of [`Model::state`], same order.
    pub fn state_mut(&mut self) -> Vec<&mut Vec<f32>> {
        let mut out: Vec<&mut Vec<f32>> = Vec::new();
        for layer in self.layers.iter_mut() {
            match layer {
                Layer::Conv { weight, bias, .. } | Layer::Dense { weight, bias, .. } => {
                    out.push(&mut weight.value);
                    out.push(&mut bias.value);
                }
                Layer::BatchNorm(bn) => push_bn_mut(bn, &mut out),
                Layer::Binary { layer, bn, .. } => {
                    let BinaryLayer { weight, af, .. } = layer;
                    out.push(&mut weight.value);
                    if let Some(af) = af {
                        out.extend(af.params_mut().iter_mut());
                    }
                    push_bn_mut(bn, &mut out);
                }
                Layer::Flatten => {}
            }
        }
        out
    }

    /// Gradient-descent step over every parameter.
    pub fn apply_adam(&mut self, adam: &mut AdamState) {
        adam.step(self.params_mut().into_iter().map(|(v, g)| (v, &*g)));
    }
}

fn push(p: &mut Param) -> (&mut [f32], &mut [f32]) {
    (&mut p.value[..], &mut p.grad[..])
}

fn push_bn<'a>(bn: &'a BatchNorm, out: &mut Vec<(Vec<usize>, &'a [f32])>) {
    let c = vec![bn.channels()];
    out.push((c.clone(), &bn.gamma.value));
    out.push((c.clone(), &bn.beta.value));
    out.push((c.clone(), &bn.running_mean));
    out.push((c, &bn.running_var));
}

fn push_bn_mut<'a>(bn: &'a mut BatchNorm, out: &mut Vec<&'a mut Vec<f32>>) {
    out.push(&mut bn.gamma.value);
    out.push(&mut bn.beta.value);
    out.push(&mut bn.running_mean);
    out.push(&mut bn.running_var);
}

fn accumulate(dst: &mut [f32], src: &[f32]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

/// Mean softmax cross-entropy over the batch. Returns the loss, its
/// gradient with respect to the logits, and the number of correct argmax
/// predictions.
pub fn softmax_cross_entropy(logits: &Tensor, labels: &[u8]) -> Result<(f64, Tensor, usize), BnnError> {
    let [n, k] = *logits.shape() else {
        return Err(BnnError::Geometry(format!("logits must be [N, K], got {:?}", logits.shape())));
    };
    if labels.len() != n || n == 0 {
        return Err(BnnError::Geometry(format!("{} labels for {n} rows", labels.len())));
    }
    let mut grad = vec![0.0f32; n * k];
    let mut loss = 0.0f64;
    let mut correct = 0;
    for (s, row) in logits.data().chunks(k).enumerate() {
        let y = labels[s] as usize;
        if y >= k {
            return Err(BnnError::Label {
                label: labels[s],
                classes: k,
            });
        }
        let max = row.iter().map(|&v| v as f64).fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = row.iter().map(|&v| (v as f64 - max).exp()).collect();
        let z: f64 = exps.iter().sum();
        loss += z.ln() + max - row[y] as f64;
        for (j, e) in exps.iter().enumerate() {
            let p = e / z;
            grad[s * k + j] = ((p - (j == y) as u8 as f64) / n as f64) as f32;
        }
        if argmax(row) == y {
            correct += 1;
        }
    }
    Ok((loss / n as f64, Tensor::from_vec(&[n, k], grad)?, correct))
}

fn argmax(row: &[f32]) -> usize {
    let mut best = 0;
    for (j, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = j;
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub loss: f64,
    pub accuracy: f64,
}

/// One shuffled pass over `data`. A trailing batch with a single sample is
/// dropped, since train-mode batch norm needs two.
pub fn train_epoch<R: Rng>(
    model: &mut Model,
    adam: &mut AdamState,
    data: &Dataset,
    batch_size: usize,
    rng: &mut R,
) -> Result<EpochStats, BnnError> {
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.shuffle(rng);
    let (mut loss_sum, mut correct, mut seen) = (0.0f64, 0usize, 0usize);
    for chunk in order.chunks(batch_size.max(2)) {
        if chunk.len() < 2 {
            continue;
        }
        let (x, labels) = data.batch(chunk)?;
        let (logits, caches) = model.forward_train(&x)?;
        let (loss, grad, ok) = softmax_cross_entropy(&logits, &labels)?;
        if !loss.is_finite() {
            return Err(BnnError::Diverged(loss));
        }
        model.zero_grad();
        model.backward(&caches, &grad)?;
        model.apply_adam(adam);
        loss_sum += loss * chunk.len() as f64;
        correct += ok;
        seen += chunk.len();
    }
    if seen == 0 {
        return Err(BnnError::DegenerateBatch(data.len()));
    }
    Ok(EpochStats {
        loss: loss_sum / seen as f64,
        accuracy: correct as f64 / seen as f64,
    })
}

/// Top-1 accuracy in eval mode.
pub fn evaluate(model: &Model, data: &Dataset, batch_size: usize) -> Result<f64, BnnError> {
    if data.is_empty() {
        return Ok(0.0);
    }
    let order: Vec<usize> = (0..data.len()).collect();
    let mut correct = 0usize;
    for chunk in order.chunks(batch_size.max(1)) {
        let (x, labels) = data.batch(chunk)?;
        let logits = model.forward_eval(&x)?;
        if !logits.all_finite() {
            return Err(BnnError::NonFinite("logits"));
        }
        let k = logits.shape()[1];
        correct += logits
            .data()
            .chunks(k)
            .zip(&labels)
            .filter(|(row, &y)| argmax(row) == y as usize)
            .count();
    }
    Ok(correct as f64 / data.len() as f64)
}
