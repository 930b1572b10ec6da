use alloc::vec;
use alloc::vec::Vec;

use super::{round_f32, ParamSet};
use crate::error::{Error, Result};
use crate::rng::RngStream;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Silu,
    Linear,
}

#[inline]
fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + libm::exp(-z))
}

impl Activation {
    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    z
                } else {
                    0.0
                }
            }
            Activation::Silu => z * sigmoid(z),
            Activation::Linear => z,
        }
    }

    /// Derivative at pre-activation `z`; ReLU'(0) = 0.
    #[inline]
    pub fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Silu => {
                let s = sigmoid(z);
                s * (1.0 + z * (1.0 - s))
            }
            Activation::Linear => 1.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Silu => "silu",
            Activation::Linear => "linear",
        }
    }
}

/// Dot product with eight independent partial sums, combined in a fixed
/// order, so the result does not depend on how the loop is vectorized.
#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 8];
    let ca = a.chunks_exact(8);
    let cb = b.chunks_exact(8);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for k in 0..8 {
            acc[k] += x[k] * y[k];
        }
    }
    let mut tail = 0.0;
    for (x, y) in ra.iter().zip(rb) {
        tail += x * y;
    }
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail
}

/// Affine map `y = act(W x + b)` with `W` stored row-major as `out × in`.
#[derive(Clone, Debug, PartialEq)]
pub struct Layer {
    pub in_dim: usize,
    pub out_dim: usize,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

impl Layer {
    /// Weights and biases uniform in `±1/√in_dim`.
    pub fn init(in_dim: usize, out_dim: usize, activation: Activation, rng: &mut RngStream) -> Self {
        let bound = 1.0 / libm::sqrt(in_dim as f64);
        let weight = (0..in_dim * out_dim)
            .map(|_| round_f32(rng.uniform_range(-bound, bound)))
            .collect();
        let bias = (0..out_dim)
            .map(|_| round_f32(rng.uniform_range(-bound, bound)))
            .collect();
        Self {
            in_dim,
            out_dim,
            weight,
            bias,
            activation,
        }
    }

    pub fn zeros(in_dim: usize, out_dim: usize, activation: Activation) -> Self {
        Self {
            in_dim,
            out_dim,
            weight: vec![0.0; in_dim * out_dim],
            bias: vec![0.0; out_dim],
            activation,
        }
    }

    #[inline]
    fn affine(&self, x: &[f64], z: &mut [f64]) {
        for ((zo, row), b) in z
            .iter_mut()
            .zip(self.weight.chunks_exact(self.in_dim))
            .zip(self.bias.iter())
        {
            *zo = b + dot(row, x);
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Layer>,
}

/// Everything `backward` needs from a forward pass.
#[derive(Clone, Debug)]
pub struct ForwardCache {
    /// Input to each layer.
    inputs: Vec<Vec<f64>>,
    /// Pre-activation of each layer.
    pre: Vec<Vec<f64>>,
}

impl ForwardCache {
    /// Pre-activation of each layer.
    pub fn pre_activations(&self) -> &[Vec<f64>] {
        &self.pre
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayerGrad {
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

/// Gradients mirroring an [`Mlp`], plus the gradient w.r.t. its input.
#[derive(Clone, Debug, PartialEq)]
pub struct GradBundle {
    pub layers: Vec<LayerGrad>,
    pub input: Vec<f64>,
}

impl GradBundle {
    pub fn zeros_like(net: &Mlp) -> Self {
        Self {
            layers: net
                .layers
                .iter()
                .map(|l| LayerGrad {
                    weight: vec![0.0; l.weight.len()],
                    bias: vec![0.0; l.bias.len()],
                })
                .collect(),
            input: vec![0.0; net.input_dim()],
        }
    }

    pub fn scale(&mut self, k: f64) {
        for t in self.tensors_mut() {
            t.iter_mut().for_each(|x| *x *= k);
        }
        self.input.iter_mut().for_each(|x| *x *= k);
    }
}

impl ParamSet for GradBundle {
    fn tensors(&self) -> Vec<&[f64]> {
        self.layers
            .iter()
            .flat_map(|l| [l.weight.as_slice(), l.bias.as_slice()])
            .collect()
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers
            .iter_mut()
            .flat_map(|l| [l.weight.as_mut_slice(), l.bias.as_mut_slice()])
            .collect()
    }
}

impl ParamSet for Mlp {
    fn tensors(&self) -> Vec<&[f64]> {
        self.layers
            .iter()
            .flat_map(|l| [l.weight.as_slice(), l.bias.as_slice()])
            .collect()
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers
            .iter_mut()
            .flat_map(|l| [l.weight.as_mut_slice(), l.bias.as_mut_slice()])
            .collect()
    }
}

impl Mlp {
    /// Builds `sizes[0] → sizes[1] → … → sizes[n]` with `hidden` on every
    /// layer but the last, which uses `output`.
    pub fn new(sizes: &[usize], hidden: Activation, output: Activation, rng: &mut RngStream) -> Result<Self> {
        if sizes.len() < 2 || sizes.iter().any(|&s| s == 0) {
            return Err(Error::InvalidParameter("mlp needs at least two nonzero layer sizes".into()));
        }
        let n = sizes.len() - 1;
        let layers = (0..n)
            .map(|i| {
                let act = if i + 1 == n { output } else { hidden };
                Layer::init(sizes[i], sizes[i + 1], act, rng)
            })
            .collect();
        Ok(Self { layers })
    }

    pub fn from_layers(layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidParameter("mlp needs at least one layer".into()));
        }
        for w in layers.windows(2) {
            if w[0].out_dim != w[1].in_dim {
                return Err(Error::DimensionMismatch {
                    expected: w[0].out_dim,
                    got: w[1].in_dim,
                });
            }
        }
        for l in &layers {
            if l.weight.len() != l.in_dim * l.out_dim || l.bias.len() != l.out_dim {
                return Err(Error::DimensionMismatch {
                    expected: l.in_dim * l.out_dim,
                    got: l.weight.len(),
                });
            }
        }
        Ok(Self { layers })
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|x| x.is_finite()))
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                got: x.len(),
            });
        }
        Ok(())
    }

    /// Output only, no cache.
    pub fn predict(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        let mut h = x.to_vec();
        for layer in &self.layers {
            let mut z = vec![0.0; layer.out_dim];
            layer.affine(&h, &mut z);
            z.iter_mut().for_each(|v| *v = layer.activation.apply(*v));
            h = z;
        }
        Ok(h)
    }

    pub fn forward(&self, x: &[f64]) -> Result<(Vec<f64>, ForwardCache)> {
        self.check_input(x)?;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut h = x.to_vec();
        for layer in &self.layers {
            let mut z = vec![0.0; layer.out_dim];
            layer.affine(&h, &mut z);
            let y = z.iter().map(|&v| layer.activation.apply(v)).collect();
            inputs.push(h);
            pre.push(z);
            h = y;
        }
        Ok((h, ForwardCache { inputs, pre }))
    }

    /// Reverse pass; `upstream` is dLoss/dOutput.
    pub fn backward(&self, cache: &ForwardCache, upstream: &[f64]) -> GradBundle {
        let mut g = GradBundle::zeros_like(self);
        self.accumulate_backward(cache, upstream, &mut g);
        g
    }

    /// Adds this sample's parameter gradients into `acc` and overwrites
    /// `acc.input` with the input gradient.
    pub fn accumulate_backward(&self, cache: &ForwardCache, upstream: &[f64], acc: &mut GradBundle) {
        let mut gy = upstream.to_vec();
        for (idx, layer) in self.layers.iter().enumerate().rev() {
            let z = &cache.pre[idx];
            let x = &cache.inputs[idx];
            let gz: Vec<f64> = gy
                .iter()
                .zip(z)
                .map(|(g, &zz)| g * layer.activation.derivative(zz))
                .collect();
            let lg = &mut acc.layers[idx];
            let mut gx = vec![0.0; layer.in_dim];
            for (o, &go) in gz.iter().enumerate() {
                if go == 0.0 {
                    continue;
                }
                lg.bias[o] += go;
                let row = &layer.weight[o * layer.in_dim..(o + 1) * layer.in_dim];
                let grow = &mut lg.weight[o * layer.in_dim..(o + 1) * layer.in_dim];
                for ((gw, xi), (w, gxi)) in grow.iter_mut().zip(x).zip(row.iter().zip(gx.iter_mut())) {
                    *gw += go * xi;
                    *gxi += go * w;
                }
            }
            gy = gx;
        }
        acc.input = gy;
    }

    /// Input gradient only; skips parameter gradients.
    pub fn input_gradient(&self, cache: &ForwardCache, upstream: &[f64]) -> Vec<f64> {
        let mut gy = upstream.to_vec();
        for (idx, layer) in self.layers.iter().enumerate().rev() {
            let z = &cache.pre[idx];
            let mut gx = vec![0.0; layer.in_dim];
            for (o, (&g, &zz)) in gy.iter().zip(z).enumerate() {
                let go = g * layer.activation.derivative(zz);
                if go == 0.0 {
                    continue;
                }
                let row = &layer.weight[o * layer.in_dim..(o + 1) * layer.in_dim];
                for (gxi, w) in gx.iter_mut().zip(row) {
                    *gxi += go * w;
                }
            }
            gy = gx;
        }
        gy
    }

    pub fn same_shape(&self, other: &Mlp) -> bool {
        self.layers.len() == other.layers.len()
            && self
                .layers
                .iter()
                .zip(&other.layers)
                .all(|(a, b)| a.in_dim == b.in_dim && a.out_dim == b.out_dim)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dense(w: Vec<f64>, b: Vec<f64>, in_dim: usize, act: Activation) -> Layer {
        let out_dim = b.len();
        Layer {
            in_dim,
            out_dim,
            weight: w,
            bias: b,
            activation: act,
        }
    }

    #[test]
    fn zero_weights_return_last_bias() {
        let net = Mlp::from_layers(vec![
            dense(vec![0.0; 6], vec![0.5, -0.5], 3, Activation::Linear),
            dense(vec![0.0; 2], vec![0.7], 2, Activation::Linear),
        ])
        .unwrap();
        assert_eq!(net.predict(&[1.0, 2.0, 3.0]).unwrap(), vec![0.7]);
    }

    #[test]
    fn relu_identity() {
        let net = Mlp::from_layers(vec![dense(vec![1.0, 0.0, 0.0, 1.0], vec![0.0, 0.0], 2, Activation::Relu)]).unwrap();
        assert_eq!(net.predict(&[-1.0, 2.0]).unwrap(), vec![0.0, 2.0]);
    }

    #[test]
    fn silu_at_one() {
        let v = Activation::Silu.apply(1.0);
        assert!((v - 0.731_058_578_630_004_9).abs() < 1e-12);
    }

    #[test]
    fn dimension_mismatch() {
        let net = Mlp::new(&[3, 4, 1], Activation::Relu, Activation::Linear, &mut RngStream::new(0, 0)).unwrap();
        assert_eq!(
            net.predict(&[1.0]).unwrap_err(),
            Error::DimensionMismatch { expected: 3, got: 1 }
        );
    }

    #[test]
    fn linear_adjoint_is_weight_row() {
        let w = vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let net = Mlp::from_layers(vec![dense(w, vec![0.1, 0.2], 3, Activation::Linear)]).unwrap();
        let (_, cache) = net.forward(&[0.3, -0.2, 0.9]).unwrap();
        let g = net.backward(&cache, &[1.0, 0.0]);
        assert_eq!(g.input, vec![1.0, 2.0, 3.0]);
        assert_eq!(net.input_gradient(&cache, &[1.0, 0.0]), vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn relu_blocks_negative_preactivation() {
        let net = Mlp::from_layers(vec![
            dense(vec![1.0], vec![-5.0], 1, Activation::Relu),
            dense(vec![2.0], vec![0.0], 1, Activation::Linear),
        ])
        .unwrap();
        let (_, cache) = net.forward(&[1.0]).unwrap();
        let g = net.backward(&cache, &[1.0]);
        assert_eq!(g.input, vec![0.0]);
        assert_eq!(g.layers[0].weight, vec![0.0]);
        assert_eq!(g.layers[0].bias, vec![0.0]);
    }

    #[test]
    fn relu_derivative_at_zero_is_zero() {
        assert_eq!(Activation::Relu.derivative(0.0), 0.0);
    }

    #[test]
    fn init_bounds_and_f32_exact() {
        let net = Mlp::new(&[16, 8, 1], Activation::Silu, Activation::Linear, &mut RngStream::new(1, 1)).unwrap();
        let bound = 0.25;
        for x in &net.layers[0].weight {
            assert!(x.abs() <= bound);
            assert_eq!(*x, *x as f32 as f64);
        }
    }
}
