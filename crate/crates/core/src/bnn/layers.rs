//! Dense and 2-D convolution kernels, plus the binary layer that wraps them
//! with the complementary activation, clip, and sign.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::binarize::{clip, sign};
use super::bits::{pack_signs, xnor_dot_words};
use super::BnnError;
use crate::expr::{self, ActivationFn, ChannelActivation, Tape};
use crate::tensor::Tensor;

/// Learnable tensor with its gradient buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub shape: Vec<usize>,
    pub value: Vec<f32>,
    pub grad: Vec<f32>,
}

impl Param {
    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Param {
            shape: shape.to_vec(),
            value: vec![0.0; n],
            grad: vec![0.0; n],
        }
    }

    /// Uniform on `±sqrt(6 / fan_in)`.
    pub fn kaiming_uniform<R: Rng>(shape: &[usize], fan_in: usize, rng: &mut R) -> Self {
        let bound = (6.0 / fan_in as f64).sqrt() as f32;
        let mut p = Param::zeros(shape);
        for v in p.value.iter_mut() {
            *v = rng.gen_range(-bound..bound);
        }
        p
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(0.0);
    }
}

/// Convolution geometry (square kernels).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvGeometry {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
}

impl ConvGeometry {
    pub fn output_hw(&self, h: usize, w: usize) -> Result<(usize, usize), BnnError> {
        let ph = h + 2 * self.padding;
        let pw = w + 2 * self.padding;
        if self.kernel == 0 || self.stride == 0 || ph < self.kernel || pw < self.kernel {
            return Err(BnnError::Geometry(format!(
                "kernel {} stride {} does not fit {h}x{w} with padding {}",
                self.kernel, self.stride, self.padding
            )));
        }
        Ok(((ph - self.kernel) / self.stride + 1, (pw - self.kernel) / self.stride + 1))
    }

    fn patch_len(&self) -> usize {
        self.in_channels * self.kernel * self.kernel
    }
}

fn check_nchw(x: &Tensor, channels: usize) -> Result<(usize, usize, usize), BnnError> {
    match *x.shape() {
        [n, c, h, w] if c == channels => Ok((n, h, w)),
        _ => Err(BnnError::Geometry(format!(
            "expected [N, {channels}, H, W] input, got {:?}",
            x.shape()
        ))),
    }
}

/// Unfolds one sample into `[C·k·k, OH·OW]` columns; padded taps are zero.
fn im2col(x: &[f32], h: usize, w: usize, g: &ConvGeometry, oh: usize, ow: usize, cols: &mut [f32]) {
    let k = g.kernel;
    let opix = oh * ow;
    for c in 0..g.in_channels {
        for ky in 0..k {
            for kx in 0..k {
                let row = (c * k + ky) * k + kx;
                let dst = &mut cols[row * opix..(row + 1) * opix];
                for oy in 0..oh {
                    let iy = (oy * g.stride + ky) as isize - g.padding as isize;
                    for ox in 0..ow {
                        let ix = (ox * g.stride + kx) as isize - g.padding as isize;
                        dst[oy * ow + ox] = if iy >= 0 && (iy as usize) < h && ix >= 0 && (ix as usize) < w {
                            x[(c * h + iy as usize) * w + ix as usize]
                        } else {
                            0.0
                        };
                    }
                }
            }
        }
    }
}

fn col2im(cols: &[f32], h: usize, w: usize, g: &ConvGeometry, oh: usize, ow: usize, dx: &mut [f32]) {
    let k = g.kernel;
    let opix = oh * ow;
    for c in 0..g.in_channels {
        for ky in 0..k {
            for kx in 0..k {
                let row = (c * k + ky) * k + kx;
                let src = &cols[row * opix..(row + 1) * opix];
                for oy in 0..oh {
                    let iy = (oy * g.stride + ky) as isize - g.padding as isize;
                    if iy < 0 || iy as usize >= h {
                        continue;
                    }
                    for ox in 0..ow {
                        let ix = (ox * g.stride + kx) as isize - g.padding as isize;
                        if ix >= 0 && (ix as usize) < w {
                            dx[(c * h + iy as usize) * w + ix as usize] += src[oy * ow + ox];
                        }
                    }
                }
            }
        }
    }
}

/// Cross-correlation of `x` ([N, C, H, W]) with `weight` ([O, C, k, k]).
pub fn conv2d_forward(
    x: &Tensor,
    weight: &[f32],
    bias: Option<&[f32]>,
    g: &ConvGeometry,
) -> Result<Tensor, BnnError> {
    let (n, h, w) = check_nchw(x, g.in_channels)?;
    let (oh, ow) = g.output_hw(h, w)?;
    let opix = oh * ow;
    let plen = g.patch_len();
    let mut out = vec![0.0f32; n * g.out_channels * opix];
    let mut cols = vec![0.0f32; plen * opix];
    let in_len = g.in_channels * h * w;
    for s in 0..n {
        im2col(&x.data()[s * in_len..(s + 1) * in_len], h, w, g, oh, ow, &mut cols);
        let out_s = &mut out[s * g.out_channels * opix..(s + 1) * g.out_channels * opix];
        for o in 0..g.out_channels {
            let dst = &mut out_s[o * opix..(o + 1) * opix];
            if let Some(b) = bias {
                dst.fill(b[o]);
            }
            for j in 0..plen {
                let wv = weight[o * plen + j];
                if wv == 0.0 {
                    continue;
                }
                let src = &cols[j * opix..(j + 1) * opix];
                for (d, &c) in dst.iter_mut().zip(src) {
                    *d += wv * c;
                }
            }
        }
    }
    Ok(Tensor::from_vec(&[n, g.out_channels, oh, ow], out)?)
}

/// Gradients of [`conv2d_forward`]: returns `(dx, dweight, dbias)`.
pub fn conv2d_backward(
    x: &Tensor,
    weight: &[f32],
    grad_out: &Tensor,
    g: &ConvGeometry,
) -> Result<(Tensor, Vec<f32>, Vec<f32>), BnnError> {
    let (n, h, w) = check_nchw(x, g.in_channels)?;
    let (oh, ow) = g.output_hw(h, w)?;
    if grad_out.shape() != [n, g.out_channels, oh, ow] {
        return Err(BnnError::Geometry(format!(
            "gradient shape {:?} does not match conv output",
            grad_out.shape()
        )));
    }
    let opix = oh * ow;
    let plen = g.patch_len();
    let in_len = g.in_channels * h * w;
    let mut dx = vec![0.0f32; x.len()];
    let mut dw = vec![0.0f32; weight.len()];
    let mut db = vec![0.0f32; g.out_channels];
    let mut cols = vec![0.0f32; plen * opix];
    let mut dcols = vec![0.0f32; plen * opix];
    for s in 0..n {
        im2col(&x.data()[s * in_len..(s + 1) * in_len], h, w, g, oh, ow, &mut cols);
        dcols.fill(0.0);
        let gy = &grad_out.data()[s * g.out_channels * opix..(s + 1) * g.out_channels * opix];
        for o in 0..g.out_channels {
            let gyo = &gy[o * opix..(o + 1) * opix];
            db[o] += gyo.iter().sum::<f32>();
            for j in 0..plen {
                let src = &cols[j * opix..(j + 1) * opix];
                dw[o * plen + j] += gyo.iter().zip(src).map(|(a, b)| a * b).sum::<f32>();
                let wv = weight[o * plen + j];
                if wv != 0.0 {
                    for (d, &gv) in dcols[j * opix..(j + 1) * opix].iter_mut().zip(gyo) {
                        *d += wv * gv;
                    }
                }
            }
        }
        col2im(&dcols, h, w, g, oh, ow, &mut dx[s * in_len..(s + 1) * in_len]);
    }
    Ok((Tensor::from_vec(x.shape(), dx)?, dw, db))
}

fn check_features(x: &Tensor, features: usize) -> Result<usize, BnnError> {
    match *x.shape() {
        [n, f] if f == features => Ok(n),
        _ => Err(BnnError::Geometry(format!(
            "expected [N, {features}] input, got {:?}",
            x.shape()
        ))),
    }
}

/// `y = x·Wᵀ + b` with `weight` laid out `[out, in]`.
pub fn dense_forward(
    x: &Tensor,
    weight: &[f32],
    bias: Option<&[f32]>,
    in_features: usize,
    out_features: usize,
) -> Result<Tensor, BnnError> {
    let n = check_features(x, in_features)?;
    let mut out = vec![0.0f32; n * out_features];
    for s in 0..n {
        let xs = &x.data()[s * in_features..(s + 1) * in_features];
        for o in 0..out_features {
            let wr = &weight[o * in_features..(o + 1) * in_features];
            let dot: f32 = xs.iter().zip(wr).map(|(a, b)| a * b).sum();
            out[s * out_features + o] = dot + bias.map_or(0.0, |b| b[o]);
        }
    }
    Ok(Tensor::from_vec(&[n, out_features], out)?)
}

/// Returns `(dx, dweight, dbias)` for [`dense_forward`].
pub fn dense_backward(
    x: &Tensor,
    weight: &[f32],
    grad_out: &Tensor,
    in_features: usize,
    out_features: usize,
) -> Result<(Tensor, Vec<f32>, Vec<f32>), BnnError> {
    let n = check_features(x, in_features)?;
    check_features(grad_out, out_features)?;
    let mut dx = vec![0.0f32; n * in_features];
    let mut dw = vec![0.0f32; weight.len()];
    let mut db = vec![0.0f32; out_features];
    for s in 0..n {
        let xs = &x.data()[s * in_features..(s + 1) * in_features];
        let dxs = &mut dx[s * in_features..(s + 1) * in_features];
        for o in 0..out_features {
            let g = grad_out.data()[s * out_features + o];
            if g == 0.0 {
                continue;
            }
            db[o] += g;
            let wr = &weight[o * in_features..(o + 1) * in_features];
            let dwr = &mut dw[o * in_features..(o + 1) * in_features];
            for i in 0..in_features {
                dwr[i] += g * xs[i];
                dxs[i] += g * wr[i];
            }
        }
    }
    Ok((Tensor::from_vec(&[n, in_features], dx)?, dw, db))
}

/// How binarized layers quantize on the forward path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BinarizeMode {
    /// `sign(clip(·))`, the training and inference path.
    #[default]
    Sign,
    /// `clip(·)` only. The backward pass is unchanged, so this is the
    /// differentiable surrogate whose exact gradient the STE computes; used
    /// to verify backpropagation by finite differences.
    Relaxed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinaryKind {
    Dense { in_features: usize, out_features: usize },
    Conv2d(ConvGeometry),
}

/// Real-valued latent weights binarized on the forward path, with an
/// optional complementary activation applied to inputs ahead of clip+sign.
#[derive(Debug, Clone)]
pub struct BinaryLayer {
    pub kind: BinaryKind,
    pub weight: Param,
    pub t_clip: f32,
    pub af: Option<ActivationFn>,
    pub af_grads: Vec<Vec<f32>>,
}

#[derive(Debug, Clone)]
pub struct BinaryCache {
    af_tape: Option<Tape>,
    pre_sign: Tensor,
    xb: Tensor,
    wb: Vec<f32>,
}

impl BinaryLayer {
    pub fn new(kind: BinaryKind, weight: Param, t_clip: f32) -> Result<Self, BnnError> {
        if !(t_clip > 0.0) {
            return Err(BnnError::Geometry(format!("t_clip must be positive, got {t_clip}")));
        }
        let expected = match kind {
            BinaryKind::Dense {
                in_features,
                out_features,
            } => in_features * out_features,
            BinaryKind::Conv2d(g) => g.out_channels * g.patch_len(),
        };
        if weight.value.len() != expected {
            return Err(BnnError::Geometry(format!(
                "weight has {} elements, layer needs {expected}",
                weight.value.len()
            )));
        }
        Ok(BinaryLayer {
            kind,
            weight,
            t_clip,
            af: None,
            af_grads: Vec::new(),
        })
    }

    pub fn in_channels(&self) -> usize {
        match self.kind {
            BinaryKind::Dense { in_features, .. } => in_features,
            BinaryKind::Conv2d(g) => g.in_channels,
        }
    }

    /// Installs (a per-channel copy of) `af`, or removes it with `None`.
    pub fn set_af(&mut self, af: Option<&ActivationFn>) -> Result<(), BnnError> {
        self.af = af.map(|a| a.with_channels(self.in_channels())).transpose()?;
        self.af_grads = self
            .af
            .as_ref()
            .map(|a| a.params().iter().map(|p| vec![0.0; p.len()]).collect())
            .unwrap_or_default();
        Ok(())
    }

    fn quantize(&self, v: f32, mode: BinarizeMode) -> f32 {
        match mode {
            BinarizeMode::Sign => sign(clip(v, self.t_clip)),
            BinarizeMode::Relaxed => clip(v, self.t_clip),
        }
    }

    /// Binarized weights under `mode`.
    pub fn binary_weights(&self, mode: BinarizeMode) -> Vec<f32> {
        self.weight.value.iter().map(|&w| self.quantize(w, mode)).collect()
    }

    pub fn forward(&self, x: &Tensor, mode: BinarizeMode) -> Result<(Tensor, BinaryCache), BnnError> {
        let (pre_sign, af_tape) = match &self.af {
            Some(af) => {
                let (y, tape) = expr::forward(af, x)?;
                if !y.all_finite() {
                    return Err(BnnError::NonFinite("activation output"));
                }
                (y, Some(tape))
            }
            None => (x.clone(), None),
        };
        let xb = pre_sign.map(|v| self.quantize(v, mode));
        let wb = self.binary_weights(mode);
        let out = self.linear(&xb, &wb)?;
        Ok((
            out,
            BinaryCache {
                af_tape,
                pre_sign,
                xb,
                wb,
            },
        ))
    }

    fn linear(&self, xb: &Tensor, wb: &[f32]) -> Result<Tensor, BnnError> {
        match self.kind {
            BinaryKind::Dense {
                in_features,
                out_features,
            } => dense_forward(xb, wb, None, in_features, out_features),
            BinaryKind::Conv2d(g) => conv2d_forward(xb, wb, None, &g),
        }
    }

    /// Backpropagates through the layer, accumulating into the weight and
    /// activation-parameter gradients. Returns the input gradient.
    pub fn backward(&mut self, cache: &BinaryCache, grad_out: &Tensor) -> Result<Tensor, BnnError> {
        let (dxb, dwb) = match self.kind {
            BinaryKind::Dense {
                in_features,
                out_features,
            } => {
                let (dx, dw, _) = dense_backward(&cache.xb, &cache.wb, grad_out, in_features, out_features)?;
                (dx, dw)
            }
            BinaryKind::Conv2d(g) => {
                let (dx, dw, _) = conv2d_backward(&cache.xb, &cache.wb, grad_out, &g)?;
                (dx, dw)
            }
        };
        let t = self.t_clip;
        for ((g, &d), &w) in self.weight.grad.iter_mut().zip(&dwb).zip(&self.weight.value) {
            if w.abs() < t {
                *g += d;
            }
        }
        let mut d_pre = dxb;
        for (g, &a) in d_pre.data_mut().iter_mut().zip(cache.pre_sign.data()) {
            if a.abs() >= t {
                *g = 0.0;
            }
        }
        match (&self.af, &cache.af_tape) {
            (Some(af), Some(tape)) => {
                let (dx, dp) = expr::backward(af, tape, &d_pre)?;
                for (acc, g) in self.af_grads.iter_mut().zip(dp) {
                    for (a, v) in acc.iter_mut().zip(g) {
                        *a += v;
                    }
                }
                Ok(dx)
            }
            _ => Ok(d_pre),
        }
    }

    /// Inference-only dense path using packed bits and xnor-popcount.
    pub fn forward_packed(&self, x: &Tensor) -> Result<Tensor, BnnError> {
        let BinaryKind::Dense {
            in_features,
            out_features,
        } = self.kind
        else {
            return Err(BnnError::Geometry("packed path is dense-only".into()));
        };
        let n = check_features(x, in_features)?;
        let pre = match &self.af {
            Some(af) => expr::apply(af, x)?,
            None => x.clone(),
        };
        let rows: Vec<_> = self
            .weight
            .value
            .chunks(in_features)
            .map(pack_signs)
            .collect();
        let mut out = vec![0.0f32; n * out_features];
        for (s, xs) in pre.data().chunks(in_features).enumerate() {
            let packed = pack_signs(xs);
            for (o, wr) in rows.iter().enumerate() {
                out[s * out_features + o] = xnor_dot_words(packed.words(), wr.words(), in_features) as f32;
            }
        }
        Ok(Tensor::from_vec(&[n, out_features], out)?)
    }

    pub fn zero_grad(&mut self) {
        self.weight.zero_grad();
        for g in self.af_grads.iter_mut() {
            g.fill(0.0);
        }
    }
}
