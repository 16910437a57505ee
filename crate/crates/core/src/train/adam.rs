use serde::{Deserialize, Serialize};

use super::{decays, ModelParams};
use crate::tensor::Matrix;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub lr: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 0.005,
            weight_decay: 5e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moments mirroring the parameter shapes.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub m: ModelParams,
    pub v: ModelParams,
    pub step: u64,
}

impl AdamState {
    pub fn new(params: &ModelParams) -> Self {
        Self {
            m: params.zeros_like(),
            v: params.zeros_like(),
            step: 0,
        }
    }
}

/// One Adam update of a single tensor. `step` is the 1-based step number.
/// Weight decay is added to the gradient (L2 regularization).
pub fn adam_update(
    param: &mut Matrix,
    grad: &Matrix,
    m: &mut Matrix,
    v: &mut Matrix,
    step: u64,
    cfg: &AdamConfig,
    weight_decay: f64,
) {
    let bc1 = 1.0 - cfg.beta1.powi(step as i32);
    let bc2 = 1.0 - cfg.beta2.powi(step as i32);
    let p = param.as_mut_slice();
    let (m, v) = (m.as_mut_slice(), v.as_mut_slice());
    for (k, &g) in grad.as_slice().iter().enumerate() {
        let g = g + weight_decay * p[k];
        m[k] = cfg.beta1 * m[k] + (1.0 - cfg.beta1) * g;
        v[k] = cfg.beta2 * v[k] + (1.0 - cfg.beta2) * g * g;
        let mhat = m[k] / bc1;
        let vhat = v[k] / bc2;
        p[k] -= cfg.lr * mhat / (vhat.sqrt() + cfg.eps);
    }
}

pub fn adam_step(params: &mut ModelParams, grads: &ModelParams, state: &mut AdamState, cfg: &AdamConfig) {
    state.step += 1;
    let step = state.step;
    let grads = grads.named();
    let ms = state.m.named_mut();
    let vs = state.v.named_mut();
    for ((((name, p), (_, g)), (_, m)), (_, v)) in params.named_mut().into_iter().zip(grads).zip(ms).zip(vs) {
        let wd = if decays(&name) { cfg.weight_decay } else { 0.0 };
        adam_update(p, g, m, v, step, cfg, wd);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::train::gradcheck_fixture;
    use crate::train::{backward, forward, ModelConfig};

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut p = Matrix::from_vec(1, 3, vec![1.0, -2.0, 0.5]);
        let before = p.clone();
        let (mut m, mut v) = (Matrix::zeros(1, 3), Matrix::zeros(1, 3));
        let cfg = AdamConfig::default();
        for step in 1..=5 {
            adam_update(&mut p, &Matrix::zeros(1, 3), &mut m, &mut v, step, &cfg, 0.0);
        }
        assert_eq!(p, before);
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut p = Matrix::scalar(0.0);
        let (mut m, mut v) = (Matrix::scalar(0.0), Matrix::scalar(0.0));
        let cfg = AdamConfig::default();
        adam_update(&mut p, &Matrix::scalar(1.0), &mut m, &mut v, 1, &cfg, 0.0);
        assert!((p.as_slice()[0] + 0.005).abs() < 1e-10);
    }

    #[test]
    fn quadratic_bowl_descends() {
        let mut p = Matrix::from_vec(1, 2, vec![1.5, -0.7]);
        let (mut m, mut v) = (Matrix::zeros(1, 2), Matrix::zeros(1, 2));
        let cfg = AdamConfig {
            lr: 0.05,
            ..AdamConfig::default()
        };
        let loss = |p: &Matrix| p.as_slice().iter().map(|x| x * x).sum::<f64>();
        let mut last = loss(&p);
        for step in 1..=10 {
            let g = p.map(|x| 2.0 * x);
            adam_update(&mut p, &g, &mut m, &mut v, step, &cfg, 0.0);
            let now = loss(&p);
            assert!(now < last);
            last = now;
        }
    }

    #[test]
    fn gates_skip_weight_decay() {
        let cfg = ModelConfig {
            latent_dim: 4,
            ..ModelConfig::default()
        };
        let (_, mut params, _) = gradcheck_fixture(&cfg, 1);
        params.gate.as_mut().unwrap().raw_gate = Matrix::from_vec(1, 4, vec![1.0; 4]);
        let zero = params.zeros_like();
        let mut state = AdamState::new(&params);
        let before = params.clone();
        adam_step(&mut params, &zero, &mut state, &AdamConfig::default());
        assert_eq!(params.gate, before.gate);
        assert_ne!(params.projection, before.projection);
        assert_eq!(state.step, 1);
    }

    #[test]
    fn separable_batch_loss_decreases() {
        let cfg = ModelConfig {
            latent_dim: 4,
            ..ModelConfig::default()
        };
        let (inputs, mut params, samples) = gradcheck_fixture(&cfg, 2);
        let mut state = AdamState::new(&params);
        let adam = AdamConfig::default();
        let mut last = f64::INFINITY;
        for _ in 0..20 {
            let mut fwd = forward(&inputs, &params, &samples[..3], None).unwrap();
            let loss = fwd.loss_value();
            assert!(loss < last, "{loss} >= {last}");
            last = loss;
            let g = backward(&mut fwd).unwrap();
            adam_step(&mut params, &g, &mut state, &adam);
        }
    }
}
