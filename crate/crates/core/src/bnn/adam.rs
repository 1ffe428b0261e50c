use serde::{Deserialize, Serialize};

/// Adam hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 5e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Bias-corrected Adam with one moment pair per parameter tensor.
///
/// Tensors are matched to their moments by visit order, so every call to
/// [`AdamState::step`] must present the same tensors in the same order.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub config: AdamConfig,
    pub step: u64,
    m: Vec<Vec<f32>>,
    v: Vec<Vec<f32>>,
}

impl AdamState {
    pub fn new(config: AdamConfig) -> Self {
        AdamState {
            config,
            step: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn step<'a>(&mut self, params: impl IntoIterator<Item = (&'a mut [f32], &'a [f32])>) {
        self.step += 1;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
        } = self.config;
        let c1 = 1.0 - beta1.powf(self.step as f64);
        let c2 = 1.0 - beta2.powf(self.step as f64);
        for (i, (value, grad)) in params.into_iter().enumerate() {
            if i == self.m.len() {
                self.m.push(vec![0.0; value.len()]);
                self.v.push(vec![0.0; value.len()]);
            }
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            for k in 0..value.len() {
                let g = grad[k] as f64;
                let mk = beta1 * m[k] as f64 + (1.0 - beta1) * g;
                let vk = beta2 * v[k] as f64 + (1.0 - beta2) * g * g;
                m[k] = mk as f32;
                v[k] = vk as f32;
                let update = lr * (mk / c1) / ((vk / c2).sqrt() + eps);
                value[k] = (value[k] as f64 - update) as f32;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_steps_match_reference() {
        let cfg = AdamConfig {
            lr: 0.1,
            ..AdamConfig::default()
        };
        let mut adam = AdamState::new(cfg);
        let mut w = vec![1.0f32, -2.0];
        let g = vec![0.5f32, -3.0];
        for _ in 0..2 {
            adam.step([(w.as_mut_slice(), g.as_slice())]);
        }
        // Constant gradient: m̂ = g and v̂ = g², so each step moves lr·g/(|g|+ε).
        for (wi, (w0, gi)) in w.iter().zip([(1.0f64, 0.5f64), (-2.0, -3.0)]) {
            let want = w0 - 2.0 * 0.1 * gi / (gi.abs() + 1e-8);
            assert!((*wi as f64 - want).abs() < 1e-6, "{wi} vs {want}");
        }
        assert_eq!(adam.step, 2);
    }
}
