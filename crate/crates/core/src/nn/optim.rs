use serde::{Deserialize, Serialize};

use crate::error::{ensure_dim, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl AdamState {
    pub fn new(dim: usize, lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: vec![0.0; dim],
            v: vec![0.0; dim],
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// One bias-corrected Adam update of `params` in place. Non-finite
    /// gradients abort before anything is modified.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        ensure_dim("adam params", self.m.len(), params.len())?;
        ensure_dim("adam grads", self.m.len(), grads.len())?;
        if let Some(i) = grads.iter().position(|g| !g.is_finite()) {
            return Err(Error::NonFinite(format!(
                "gradient coordinate {i} is {} at optimizer step {}",
                grads[i],
                self.step + 1
            )));
        }
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        for (((p, g), m), v) in params.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *p -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GradClipConfig {
    pub max_norm: f64,
}

impl Default for GradClipConfig {
    fn default() -> Self {
        Self { max_norm: 1.0 }
    }
}

pub fn l2_norm(v: &[f64]) -> f64 {
    v.iter().map(|g| g * g).sum::<f64>().sqrt()
}

/// Rescale `grads` in place so its L2 norm is at most `cfg.max_norm`.
/// Returns the norm before clipping.
pub fn clip_global_norm_in_place(grads: &mut [f64], cfg: GradClipConfig) -> f64 {
    let norm = l2_norm(grads);
    if norm > cfg.max_norm {
        let s = cfg.max_norm / norm;
        grads.iter_mut().for_each(|g| *g *= s);
    }
    norm
}

pub fn clip_global_norm(grads: &[f64], cfg: GradClipConfig) -> Vec<f64> {
    let mut out = grads.to_vec();
    clip_global_norm_in_place(&mut out, cfg);
    out
}
