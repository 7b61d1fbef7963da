use serde::{Deserialize, Serialize};

use super::layers::Module;

/// Adam with decoupled weight decay.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamWConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

pub struct AdamW {
    pub config: AdamWConfig,
    pub weight_decay: f64,
    step: u64,
    moments: Vec<(Vec<f32>, Vec<f32>)>,
}

impl AdamW {
    pub fn new(config: AdamWConfig, weight_decay: f64) -> Self {
        Self {
            config,
            weight_decay,
            step: 0,
            moments: Vec::new(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// One update of every parameter from its accumulated gradient.
    pub fn step<M: Module + ?Sized>(&mut self, model: &mut M, lr: f64) {
        self.step += 1;
        let AdamWConfig { beta1, beta2, eps } = self.config;
        let bc1 = 1.0 - beta1.powi(self.step as i32);
        let bc2 = 1.0 - beta2.powi(self.step as i32);
        let decay = (1.0 - lr * self.weight_decay) as f32;
        let (b1, b2) = (beta1 as f32, beta2 as f32);
        let step_size = (lr / bc1) as f32;
        let bc2_sqrt = bc2.sqrt() as f32;
        let eps = eps as f32;
        let moments = &mut self.moments;
        let mut idx = 0;
        model.visit_params(&mut |p| {
            if moments.len() <= idx {
                moments.push((vec![0.0; p.value.len()], vec![0.0; p.value.len()]));
            }
            let (m, v) = &mut moments[idx];
            for i in 0..p.value.len() {
                let g = p.grad[i];
                m[i] = b1 * m[i] + (1.0 - b1) * g;
                v[i] = b2 * v[i] + (1.0 - b2) * g * g;
                p.value[i] *= decay;
                p.value[i] -= step_size * m[i] / (v[i].sqrt() / bc2_sqrt + eps);
            }
            idx += 1;
        });
    }
}

/// Cosine decay from `lr_max` at epoch 0 to `lr_min` at the last epoch.
pub fn cosine_lr(epoch: usize, epochs: usize, lr_max: f64, lr_min: f64) -> f64 {
    if epochs <= 1 {
        return lr_max;
    }
    let t = epoch as f64 / (epochs - 1) as f64;
    lr_min + 0.5 * (lr_max - lr_min) * (1.0 + (std::f64::consts::PI * t).cos())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::layers::Param;

    struct One(Param);

    impl Module for One {
        fn visit_params(&mut self, f: &mut dyn FnMut(&mut Param)) {
            f(&mut self.0);
        }
        fn visit_state(&self, f: &mut dyn FnMut(&[f32])) {
            f(&self.0.value);
        }
        fn visit_state_mut(&mut self, f: &mut dyn FnMut(&mut [f32])) {
            f(&mut self.0.value);
        }
    }

    #[test]
    fn first_step_moves_by_lr() {
        // With bias correction the first Adam step is lr·sign(g).
        let mut m = One(Param::new(vec![1.0, -2.0]));
        m.0.grad = vec![0.3, -5.0];
        let mut opt = AdamW::new(AdamWConfig::default(), 0.0);
        opt.step(&mut m, 0.1);
        assert!((m.0.value[0] - 0.9).abs() < 1e-5);
        assert!((m.0.value[1] + 1.9).abs() < 1e-5);
    }

    #[test]
    fn weight_decay_is_decoupled() {
        let mut m = One(Param::new(vec![2.0]));
        m.0.grad = vec![0.0];
        let mut opt = AdamW::new(AdamWConfig::default(), 0.5);
        opt.step(&mut m, 0.1);
        assert!((m.0.value[0] - 2.0 * (1.0 - 0.05)).abs() < 1e-6);
    }

    #[test]
    fn minimizes_quadratic() {
        let mut m = One(Param::new(vec![5.0]));
        let mut opt = AdamW::new(AdamWConfig::default(), 0.0);
        for _ in 0..2000 {
            m.0.grad = vec![2.0 * m.0.value[0]];
            opt.step(&mut m, 0.05);
        }
        assert!(m.0.value[0].abs() < 1e-2);
    }

    #[test]
    fn cosine_endpoints() {
        assert_eq!(cosine_lr(0, 30, 1e-3, 1e-5), 1e-3);
        assert!((cosine_lr(29, 30, 1e-3, 1e-5) - 1e-5).abs() < 1e-18);
        assert!((cosine_lr(1, 3, 1.0, 0.0) - 0.5).abs() < 1e-12);
        assert_eq!(cosine_lr(0, 1, 1e-3, 1e-5), 1e-3);
    }
}
