use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{check_dim, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputActivation {
    Linear,
    Tanh,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub weights: DMatrix<f64>,
    pub bias: DVector<f64>,
}

impl Layer {
    pub fn shape(&self) -> (usize, usize) {
        self.weights.shape()
    }
}

/// Fully connected network with tanh hidden units. Inputs are batched as
/// columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    layers: Vec<Layer>,
    output: OutputActivation,
}

/// Forward-pass intermediates needed by [`Mlp::backward`]: the input of
/// each layer followed by the network output.
pub struct ForwardCache {
    activations: Vec<DMatrix<f64>>,
}

impl ForwardCache {
    pub fn output(&self) -> &DMatrix<f64> {
        self.activations.last().expect("cache holds the input at least")
    }
}

impl Mlp {
    /// `sizes = [input, hidden…, output]`; weights and biases uniform in
    /// `±1/√fan_in`.
    pub fn new<R: Rng + ?Sized>(sizes: &[usize], output: OutputActivation, rng: &mut R) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::InvalidArgument(format!("bad layer sizes {sizes:?}")));
        }
        let layers = sizes
            .windows(2)
            .map(|w| {
                let bound = 1.0 / (w[0] as f64).sqrt();
                Layer {
                    weights: DMatrix::from_fn(w[1], w[0], |_, _| rng.random_range(-bound..=bound)),
                    bias: DVector::from_fn(w[1], |_, _| rng.random_range(-bound..=bound)),
                }
            })
            .collect();
        Ok(Self { layers, output })
    }

    pub fn from_layers(layers: Vec<Layer>, output: OutputActivation) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidArgument("network needs at least one layer".into()));
        }
        for pair in layers.windows(2) {
            check_dim("Mlp layer chain", pair[0].weights.nrows(), pair[1].weights.ncols())?;
        }
        for l in &layers {
            check_dim("Mlp bias", l.weights.nrows(), l.bias.len())?;
        }
        Ok(Self { layers, output })
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weights.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("non-empty").weights.nrows()
    }

    pub fn shapes(&self) -> Vec<(usize, usize)> {
        self.layers.iter().map(Layer::shape).collect()
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    /// Parameters flattened layer by layer: weights (column-major), then bias.
    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for l in &self.layers {
            out.extend_from_slice(l.weights.as_slice());
            out.extend_from_slice(l.bias.as_slice());
        }
        out
    }

    pub fn set_params(&mut self, flat: &[f64]) -> Result<()> {
        check_dim("Mlp::set_params", self.num_params(), flat.len())?;
        let mut at = 0;
        for l in &mut self.layers {
            let nw = l.weights.len();
            l.weights.as_mut_slice().copy_from_slice(&flat[at..at + nw]);
            at += nw;
            let nb = l.bias.len();
            l.bias.as_mut_slice().copy_from_slice(&flat[at..at + nb]);
            at += nb;
        }
        Ok(())
    }

    /// `θ ← θ + alpha·step` over the flat parameter layout.
    pub fn add_scaled(&mut self, step: &[f64], alpha: f64) {
        debug_assert_eq!(step.len(), self.num_params());
        let mut at = 0;
        for l in &mut self.layers {
            for v in l.weights.iter_mut().chain(l.bias.iter_mut()) {
                *v += alpha * step[at];
                at += 1;
            }
        }
    }

    /// Polyak averaging `θ ← (1 − τ) θ + τ θ_src`.
    pub fn soft_update_from(&mut self, src: &Mlp, tau: f64) {
        for (dst, s) in self.layers.iter_mut().zip(&src.layers) {
            dst.weights.zip_apply(&s.weights, |d, v| *d = (1.0 - tau) * *d + tau * v);
            dst.bias.zip_apply(&s.bias, |d, v| *d = (1.0 - tau) * *d + tau * v);
        }
    }

    pub fn forward(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut h = x.clone();
        for (i, l) in self.layers.iter().enumerate() {
            h = self.affine(l, &h);
            self.activate(i, &mut h);
        }
        h
    }

    pub fn forward_one(&self, x: &[f64]) -> DVector<f64> {
        let out = self.forward(&DMatrix::from_column_slice(x.len(), 1, x));
        out.column(0).into_owned()
    }

    pub fn forward_cached(&self, x: &DMatrix<f64>) -> ForwardCache {
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        activations.push(x.clone());
        for (i, l) in self.layers.iter().enumerate() {
            let mut h = self.affine(l, activations.last().expect("pushed above"));
            self.activate(i, &mut h);
            activations.push(h);
        }
        ForwardCache { activations }
    }

    /// Given `∂L/∂output` (same shape as the output), returns the flat
    /// parameter gradient and `∂L/∂input`.
    pub fn backward(&self, cache: &ForwardCache, grad_out: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
        let last = self.layers.len() - 1;
        let mut per_layer: Vec<(DMatrix<f64>, DVector<f64>)> = Vec::with_capacity(self.layers.len());
        let mut delta = grad_out.clone();
        for i in (0..self.layers.len()).rev() {
            let out = &cache.activations[i + 1];
            if i != last || self.output == OutputActivation::Tanh {
                delta.zip_apply(out, |d, a| *d *= 1.0 - a * a);
            }
            let input = &cache.activations[i];
            let gw = &delta * input.transpose();
            let gb = delta.column_sum();
            let next = self.layers[i].weights.transpose() * &delta;
            per_layer.push((gw, gb));
            delta = next;
        }
        per_layer.reverse();
        let mut flat = Vec::with_capacity(self.num_params());
        for (gw, gb) in &per_layer {
            flat.extend_from_slice(gw.as_slice());
            flat.extend_from_slice(gb.as_slice());
        }
        (flat, delta)
    }

    fn affine(&self, l: &Layer, h: &DMatrix<f64>) -> DMatrix<f64> {
        let mut z = &l.weights * h;
        for mut col in z.column_iter_mut() {
            col += &l.bias;
        }
        z
    }

    fn activate(&self, i: usize, h: &mut DMatrix<f64>) {
        if i + 1 < self.layers.len() || self.output == OutputActivation::Tanh {
            h.apply(|v| *v = v.tanh());
        }
    }
}
