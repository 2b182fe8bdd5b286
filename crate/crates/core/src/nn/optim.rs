use serde::{Deserialize, Serialize};

use super::network::Weights;
use crate::error::{Error, Result};

/// Triangular cyclic learning rate between `base_lr` and `max_lr`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CyclicSchedule {
    pub base_lr: f64,
    pub max_lr: f64,
    /// Steps in one full up-and-down cycle.
    pub cycle_steps: usize,
}

impl CyclicSchedule {
    pub fn validate(&self) -> Result<()> {
        if !(self.base_lr > 0.0 && self.max_lr >= self.base_lr && self.max_lr.is_finite()) || self.cycle_steps == 0 {
            return Err(Error::Config(format!(
                "learning-rate schedule needs 0 < base_lr <= max_lr and a nonzero cycle, got {self:?}"
            )));
        }
        Ok(())
    }

    /// Rate at `step`: `base_lr` at each cycle start, `max_lr` at each half cycle.
    pub fn lr(&self, step: usize) -> f64 {
        let phase = (step % self.cycle_steps) as f64 / self.cycle_steps as f64;
        let tri = 1.0 - (2.0 * phase - 1.0).abs();
        self.base_lr + (self.max_lr - self.base_lr) * tri
    }
}

/// Adam moment estimates, shaped like the weights.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub m: Weights,
    pub v: Weights,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(like: &Weights) -> Self {
        let mut m = like.clone();
        m.scale(0.0);
        Self {
            v: m.clone(),
            m,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// One Adam update with the cyclic rate for `step_index` (zero based).
pub fn adam_clr_step(w: &mut Weights, grads: &Weights, step_index: usize, schedule: &CyclicSchedule, state: &mut AdamState) -> f64 {
    let lr = schedule.lr(step_index);
    adam_step(w, grads, step_index, lr, state);
    lr
}

/// One Adam update at a fixed rate.
pub fn adam_step(w: &mut Weights, grads: &Weights, step_index: usize, lr: f64, state: &mut AdamState) {
    let t = (step_index + 1) as i32;
    let (b1, b2, eps) = (state.beta1, state.beta2, state.eps);
    let c1 = 1.0 - b1.powi(t);
    let c2 = 1.0 - b2.powi(t);
    let params = w.iter_flat_mut();
    let moments = state.m.iter_flat_mut().zip(state.v.iter_flat_mut());
    for ((p, g), (m, v)) in params.zip(grads.iter_flat()).zip(moments) {
        *m = b1 * *m + (1.0 - b1) * g;
        *v = b2 * *v + (1.0 - b2) * g * g;
        let m_hat = *m / c1;
        let v_hat = *v / c2;
        *p -= lr * m_hat / (v_hat.sqrt() + eps);
    }
}
