use alloc::vec;
use alloc::vec::Vec;

use super::{global_norm, round_f32, ParamSet};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Gradients are rescaled to at most this global norm before the step.
    pub clip_norm: Option<f64>,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 3e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            clip_norm: Some(10.0),
        }
    }
}

/// Adam moments for one parameter set, tensor-aligned with it.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam {
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub t: u64,
}

impl Adam {
    pub fn new<P: ParamSet>(params: &P) -> Self {
        let m: Vec<Vec<f64>> = params.tensors().iter().map(|t| vec![0.0; t.len()]).collect();
        Self {
            v: m.clone(),
            m,
            t: 0,
        }
    }

    /// One Adam step. `decay[i]` is a decoupled weight-decay rate for tensor
    /// `i` (`p ← p − lr·decay·p`); pass an empty slice for none.
    pub fn step<P: ParamSet, G: ParamSet>(
        &mut self,
        params: &mut P,
        grads: &G,
        cfg: &AdamConfig,
        decay: &[f64],
    ) -> Result<()> {
        let g = grads.tensors();
        let mut p = params.tensors_mut();
        if g.len() != p.len() || p.len() != self.m.len() {
            return Err(Error::DimensionMismatch {
                expected: p.len(),
                got: g.len(),
            });
        }
        let scale = match cfg.clip_norm {
            Some(max) => {
                let n = global_norm(grads);
                if n > max {
                    max / n
                } else {
                    1.0
                }
            }
            None => 1.0,
        };
        self.t += 1;
        let bc1 = 1.0 - libm::pow(cfg.beta1, self.t as f64);
        let bc2 = 1.0 - libm::pow(cfg.beta2, self.t as f64);
        for (i, (pt, gt)) in p.iter_mut().zip(g.iter()).enumerate() {
            if pt.len() != gt.len() {
                return Err(Error::DimensionMismatch {
                    expected: pt.len(),
                    got: gt.len(),
                });
            }
            let wd = decay.get(i).copied().unwrap_or(0.0);
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            for j in 0..pt.len() {
                let gj = gt[j] * scale;
                m[j] = round_f32(cfg.beta1 * m[j] + (1.0 - cfg.beta1) * gj);
                v[j] = round_f32(cfg.beta2 * v[j] + (1.0 - cfg.beta2) * gj * gj);
                let mhat = m[j] / bc1;
                let vhat = v[j] / bc2;
                let mut x = pt[j] - cfg.lr * mhat / (libm::sqrt(vhat) + cfg.eps);
                if wd != 0.0 {
                    x -= cfg.lr * wd * pt[j];
                }
                pt[j] = round_f32(x);
            }
        }
        Ok(())
    }
}
