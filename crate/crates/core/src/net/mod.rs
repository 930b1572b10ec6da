//! Fully-connected networks with hand-written reverse mode.
//!
//! Parameters are held in `f64` but every value written by initialization,
//! an optimizer step or Polyak averaging is rounded to the nearest `f32`, so
//! checkpoints stored as little-endian `f32` round-trip bit-exactly.

mod adam;
mod mlp;
mod score_net;

pub use adam::{Adam, AdamConfig};
pub use mlp::{Activation, ForwardCache, GradBundle, Layer, LayerGrad, Mlp};
pub use score_net::{ScoreCache, ScoreGrad, ScoreNet, STEP_EMBED_DIM};

use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Rounds to the nearest `f32` value, kept as `f64`.
#[inline]
pub fn round_f32(x: f64) -> f64 {
    x as f32 as f64
}

/// Ordered view of every trainable tensor of a model (or of a gradient
/// mirroring one).
pub trait ParamSet {
    fn tensors(&self) -> Vec<&[f64]>;
    fn tensors_mut(&mut self) -> Vec<&mut [f64]>;

    fn num_params(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }
}

/// `target ← (1-κ)·target + κ·online`, elementwise, over matching tensors.
pub fn polyak_update<P: ParamSet>(target: &mut P, online: &P, kappa: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&kappa) {
        return Err(Error::InvalidParameter("polyak rate must lie in [0, 1]".into()));
    }
    let src = online.tensors();
    let mut dst = target.tensors_mut();
    if src.len() != dst.len() {
        return Err(Error::DimensionMismatch {
            expected: dst.len(),
            got: src.len(),
        });
    }
    for (d, s) in dst.iter().zip(src.iter()) {
        if d.len() != s.len() {
            return Err(Error::DimensionMismatch {
                expected: d.len(),
                got: s.len(),
            });
        }
    }
    if kappa == 0.0 {
        return Ok(());
    }
    for (d, s) in dst.iter_mut().zip(src.iter()) {
        for (t, o) in d.iter_mut().zip(s.iter()) {
            *t = if kappa == 1.0 {
                *o
            } else {
                round_f32((1.0 - kappa) * *t + kappa * *o)
            };
        }
    }
    Ok(())
}

/// Euclidean norm over every tensor of a gradient.
pub fn global_norm<P: ParamSet>(g: &P) -> f64 {
    libm::sqrt(g.tensors().iter().flat_map(|t| t.iter()).map(|x| x * x).sum())
}
