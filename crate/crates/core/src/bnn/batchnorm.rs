use super::layers::Param;
use super::BnnError;
use crate::tensor::Tensor;

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f32 = 0.9;

/// Per-channel batch normalization over axis 1 of `[N, C]` or `[N, C, H, W]`.
#[derive(Debug, Clone)]
pub struct BatchNorm {
    pub gamma: Param,
    pub beta: Param,
    pub running_mean: Vec<f32>,
    pub running_var: Vec<f32>,
}

#[derive(Debug, Clone)]
pub struct BnCache {
    x_hat: Vec<f32>,
    inv_std: Vec<f64>,
    shape: Vec<usize>,
}

fn layout(x: &Tensor, channels: usize) -> Result<(usize, usize), BnnError> {
    let s = x.shape();
    if s.len() < 2 || s[1] != channels {
        return Err(BnnError::Geometry(format!(
            "batch norm over {channels} channels got input {s:?}"
        )));
    }
    Ok((s[0], s[2..].iter().product()))
}

impl BatchNorm {
    pub fn new(channels: usize) -> Self {
        let mut gamma = Param::zeros(&[channels]);
        gamma.value.fill(1.0);
        BatchNorm {
            gamma,
            beta: Param::zeros(&[channels]),
            running_mean: vec![0.0; channels],
            running_var: vec![1.0; channels],
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.value.len()
    }

    /// Normalizes with batch statistics (biased variance) and updates the
    /// running averages. Needs at least two values per channel.
    pub fn forward_train(&mut self, x: &Tensor) -> Result<(Tensor, BnCache), BnnError> {
        let c = self.channels();
        let (n, inner) = layout(x, c)?;
        let count = n * inner;
        if count < 2 {
            return Err(BnnError::DegenerateBatch(count));
        }
        let data = x.data();
        let mut out = vec![0.0f32; data.len()];
        let mut x_hat = vec![0.0f32; data.len()];
        let mut inv_std = vec![0.0f64; c];
        for ch in 0..c {
            let idx = |s: usize, i: usize| (s * c + ch) * inner + i;
            let mut sum = 0.0f64;
            for s in 0..n {
                for i in 0..inner {
                    sum += data[idx(s, i)] as f64;
                }
            }
            let mean = sum / count as f64;
            let mut sq = 0.0f64;
            for s in 0..n {
                for i in 0..inner {
                    let d = data[idx(s, i)] as f64 - mean;
                    sq += d * d;
                }
            }
            let var = sq / count as f64;
            let is = 1.0 / (var + BN_EPS).sqrt();
            inv_std[ch] = is;
            let (g, b) = (self.gamma.value[ch] as f64, self.beta.value[ch] as f64);
            for s in 0..n {
                for i in 0..inner {
                    let k = idx(s, i);
                    let h = (data[k] as f64 - mean) * is;
                    x_hat[k] = h as f32;
                    out[k] = (g * h + b) as f32;
                }
            }
            self.running_mean[ch] = BN_MOMENTUM * self.running_mean[ch] + (1.0 - BN_MOMENTUM) * mean as f32;
            self.running_var[ch] = BN_MOMENTUM * self.running_var[ch] + (1.0 - BN_MOMENTUM) * var as f32;
        }
        Ok((
            Tensor::from_vec(x.shape(), out)?,
            BnCache {
                x_hat,
                inv_std,
                shape: x.shape().to_vec(),
            },
        ))
    }

    /// Normalizes with the running statistics.
    pub fn forward_eval(&self, x: &Tensor) -> Result<Tensor, BnnError> {
        let c = self.channels();
        let (_, inner) = layout(x, c)?;
        let (scale, shift) = self.affine();
        let mut out = x.clone();
        for (k, v) in out.data_mut().iter_mut().enumerate() {
            let ch = (k / inner) % c;
            *v = (*v as f64 * scale[ch] + shift[ch]) as f32;
        }
        Ok(out)
    }

    /// Eval-mode `y = scale·x + shift` per channel.
    pub fn affine(&self) -> (Vec<f64>, Vec<f64>) {
        (0..self.channels())
            .map(|ch| {
                let s = self.gamma.value[ch] as f64 / (self.running_var[ch] as f64 + BN_EPS).sqrt();
                (s, self.beta.value[ch] as f64 - s * self.running_mean[ch] as f64)
            })
            .unzip()
    }

    pub fn backward(&mut self, cache: &BnCache, grad_out: &Tensor) -> Result<Tensor, BnnError> {
        if grad_out.shape() != cache.shape.as_slice() {
            return Err(BnnError::Geometry("batch norm gradient shape mismatch".into()));
        }
        let c = self.channels();
        let (n, inner) = layout(grad_out, c)?;
        let m = (n * inner) as f64;
        let gy = grad_out.data();
        let mut dx = vec![0.0f32; gy.len()];
        for ch in 0..c {
            let idx = |s: usize, i: usize| (s * c + ch) * inner + i;
            let (mut sg, mut sgh) = (0.0f64, 0.0f64);
            for s in 0..n {
                for i in 0..inner {
                    let k = idx(s, i);
                    sg += gy[k] as f64;
                    sgh += gy[k] as f64 * cache.x_hat[k] as f64;
                }
            }
            self.beta.grad[ch] += sg as f32;
            self.gamma.grad[ch] += sgh as f32;
            let coef = self.gamma.value[ch] as f64 * cache.inv_std[ch] / m;
            for s in 0..n {
                for i in 0..inner {
                    let k = idx(s, i);
                    dx[k] = (coef * (m * gy[k] as f64 - sg - cache.x_hat[k] as f64 * sgh)) as f32;
                }
            }
        }
        Ok(Tensor::from_vec(grad_out.shape(), dx)?)
    }

    pub fn zero_grad(&mut self) {
        self.gamma.zero_grad();
        self.beta.zero_grad();
    }
}
