use serde::{Deserialize, Serialize};

/// Plain gradient step `w - lr * g`.
#[inline]
pub fn sgd_step(w: f64, g: f64, lr: f64) -> f64 {
    w - lr * g
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First/second moment accumulators and the step count.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl AdamState {
    pub fn new(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    /// Advances the moments with gradient `g` and writes the bias-corrected
    /// update `-lr * m̂ / (√v̂ + eps)` into `delta`.
    pub fn step(&mut self, g: &[f64], lr: f64, cfg: &AdamConfig, delta: &mut [f64]) {
        self.t += 1;
        let t = self.t as i32;
        let c1 = 1.0 - cfg.beta1.powi(t);
        let c2 = 1.0 - cfg.beta2.powi(t);
        for (((m, v), &gi), d) in self.m.iter_mut().zip(&mut self.v).zip(g).zip(delta) {
            *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * gi;
            *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * gi * gi;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *d = -lr * m_hat / (v_hat.sqrt() + cfg.eps);
        }
    }
}

/// Scalar convenience wrapper around [`AdamState::step`]; returns the delta.
pub fn adam_step(state: &mut AdamState, g: f64, lr: f64, cfg: &AdamConfig) -> f64 {
    let mut delta = [0.0];
    state.step(&[g], lr, cfg, &mut delta);
    delta[0]
}

/// Optimizer state for a whole parameter vector.
#[derive(Debug, Clone)]
pub enum OptimizerState {
    Sgd,
    Adam { state: AdamState, cfg: AdamConfig, delta: Vec<f64> },
}

impl OptimizerState {
    pub fn new(kind: super::Optimizer, n: usize) -> Self {
        match kind {
            super::Optimizer::Sgd => OptimizerState::Sgd,
            super::Optimizer::Adam => OptimizerState::Adam {
                state: AdamState::new(n),
                cfg: AdamConfig::default(),
                delta: vec![0.0; n],
            },
        }
    }

    pub fn apply(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        match self {
            OptimizerState::Sgd => {
                for (w, &g) in params.iter_mut().zip(grad) {
                    *w = sgd_step(*w, g, lr);
                }
            }
            OptimizerState::Adam { state, cfg, delta } => {
                state.step(grad, lr, cfg, delta);
                for (w, d) in params.iter_mut().zip(delta.iter()) {
                    *w += d;
                }
            }
        }
    }
}
