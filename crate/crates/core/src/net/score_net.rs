use alloc::vec;
use alloc::vec::Vec;

use super::{round_f32, Activation, ForwardCache, GradBundle, Mlp, ParamSet};
use crate::error::{Error, Result};
use crate::rng::RngStream;

pub const STEP_EMBED_DIM: usize = 16;

/// Score network `φ(s, a, τ)`: a learned `K × 16` step-embedding table
/// concatenated to `(s, a)` and fed through an MLP trunk that outputs `d_a`.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoreNet {
    pub state_dim: usize,
    pub action_dim: usize,
    pub steps: usize,
    /// Row `τ-1` embeds diffusion step `τ`.
    pub embedding: Vec<f64>,
    pub trunk: Mlp,
}

#[derive(Clone, Debug)]
pub struct ScoreCache {
    step: usize,
    trunk: ForwardCache,
}

impl ScoreCache {
    pub fn trunk(&self) -> &ForwardCache {
        &self.trunk
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScoreGrad {
    pub embedding: Vec<f64>,
    pub trunk: GradBundle,
}

impl ScoreGrad {
    pub fn zeros_like(net: &ScoreNet) -> Self {
        Self {
            embedding: vec![0.0; net.embedding.len()],
            trunk: GradBundle::zeros_like(&net.trunk),
        }
    }

    pub fn scale(&mut self, k: f64) {
        self.embedding.iter_mut().for_each(|x| *x *= k);
        self.trunk.scale(k);
    }
}

impl ParamSet for ScoreGrad {
    fn tensors(&self) -> Vec<&[f64]> {
        let mut v = vec![self.embedding.as_slice()];
        v.extend(self.trunk.tensors());
        v
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut v = vec![self.embedding.as_mut_slice()];
        v.extend(self.trunk.tensors_mut());
        v
    }
}

impl ParamSet for ScoreNet {
    fn tensors(&self) -> Vec<&[f64]> {
        let mut v = vec![self.embedding.as_slice()];
        v.extend(self.trunk.tensors());
        v
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut v = vec![self.embedding.as_mut_slice()];
        v.extend(self.trunk.tensors_mut());
        v
    }
}

impl ScoreNet {
    /// Embedding entries are standard normal; trunk layers use the uniform
    /// `±1/√fan_in` rule and ReLU hidden activations.
    pub fn new(
        state_dim: usize,
        action_dim: usize,
        steps: usize,
        hidden: &[usize],
        rng: &mut RngStream,
    ) -> Result<Self> {
        if steps == 0 {
            return Err(Error::InvalidParameter("score net needs K >= 1".into()));
        }
        let embedding = (0..steps * STEP_EMBED_DIM).map(|_| round_f32(rng.normal())).collect();
        let mut sizes = vec![state_dim + action_dim + STEP_EMBED_DIM];
        sizes.extend_from_slice(hidden);
        sizes.push(action_dim);
        let trunk = Mlp::new(&sizes, Activation::Relu, Activation::Linear, rng)?;
        Ok(Self {
            state_dim,
            action_dim,
            steps,
            embedding,
            trunk,
        })
    }

    pub fn embedding_row(&self, step: usize) -> &[f64] {
        &self.embedding[(step - 1) * STEP_EMBED_DIM..step * STEP_EMBED_DIM]
    }

    fn input(&self, s: &[f64], a: &[f64], step: usize) -> Result<Vec<f64>> {
        if step == 0 || step > self.steps {
            return Err(Error::StepOutOfRange {
                step,
                max: self.steps,
            });
        }
        if s.len() != self.state_dim {
            return Err(Error::DimensionMismatch {
                expected: self.state_dim,
                got: s.len(),
            });
        }
        if a.len() != self.action_dim {
            return Err(Error::DimensionMismatch {
                expected: self.action_dim,
                got: a.len(),
            });
        }
        let mut x = Vec::with_capacity(self.trunk.input_dim());
        x.extend_from_slice(s);
        x.extend_from_slice(a);
        x.extend_from_slice(self.embedding_row(step));
        Ok(x)
    }

    /// `φ(s, a, τ)` for `τ ∈ 1..=K`.
    pub fn eval(&self, s: &[f64], a: &[f64], step: usize) -> Result<Vec<f64>> {
        let x = self.input(s, a, step)?;
        self.trunk.predict(&x)
    }

    pub fn forward(&self, s: &[f64], a: &[f64], step: usize) -> Result<(Vec<f64>, ScoreCache)> {
        let x = self.input(s, a, step)?;
        let (y, trunk) = self.trunk.forward(&x)?;
        Ok((y, ScoreCache { step, trunk }))
    }

    /// Adds parameter gradients (trunk and the used embedding row) into `acc`.
    pub fn accumulate_backward(&self, cache: &ScoreCache, upstream: &[f64], acc: &mut ScoreGrad) {
        self.trunk.accumulate_backward(&cache.trunk, upstream, &mut acc.trunk);
        let off = self.state_dim + self.action_dim;
        let row = (cache.step - 1) * STEP_EMBED_DIM;
        for k in 0..STEP_EMBED_DIM {
            acc.embedding[row + k] += acc.trunk.input[off + k];
        }
    }

    pub fn backward(&self, cache: &ScoreCache, upstream: &[f64]) -> ScoreGrad {
        let mut g = ScoreGrad::zeros_like(self);
        self.accumulate_backward(cache, upstream, &mut g);
        g
    }
}
