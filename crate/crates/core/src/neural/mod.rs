//! Small fully connected networks with hand-written reverse-mode gradients.
//!
//! Parameters live in one flat vector. Layer `l` stores its weights
//! row-major as `[outputs][inputs]`, followed by its `outputs` biases.

mod adam;
pub mod checkpoint;

pub use adam::{soft_update, AdamConfig, AdamState};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Identity,
    Tanh,
}

impl Activation {
    pub fn tag(self) -> u8 {
        match self {
            Activation::Identity => 0,
            Activation::Tanh => 1,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(Activation::Identity),
            1 => Some(Activation::Tanh),
            _ => None,
        }
    }

    #[inline]
    fn apply<T: Scalar>(self, z: T) -> T {
        match self {
            Activation::Identity => z,
            Activation::Tanh => z.tanh(),
        }
    }

    /// Derivative expressed through the activation's output.
    #[inline]
    fn derivative_from_output<T: Scalar>(self, y: T) -> T {
        match self {
            Activation::Identity => T::one(),
            Activation::Tanh => T::one() - y * y,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerShape {
    pub inputs: usize,
    pub outputs: usize,
    pub activation: Activation,
}

impl LayerShape {
    pub fn param_count(&self) -> usize {
        self.inputs * self.outputs + self.outputs
    }
}

/// Gradient aligned with an [`Mlp`] parameter vector.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradient<T>(pub Vec<T>);

impl<T: Scalar> Gradient<T> {
    pub fn zeros(len: usize) -> Self {
        Gradient(vec![T::zero(); len])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[T] {
        &self.0
    }

    pub fn add_assign(&mut self, other: &Gradient<T>) {
        for (a, &b) in self.0.iter_mut().zip(&other.0) {
            *a += b;
        }
    }

    pub fn scale(&mut self, factor: T) {
        for a in &mut self.0 {
            *a *= factor;
        }
    }

    pub fn norm(&self) -> T {
        self.0.iter().fold(T::zero(), |s, &g| s + g * g).sqrt()
    }

    /// Rescales so the Euclidean norm is at most `max_norm`.
    pub fn clip_norm(&mut self, max_norm: T) {
        let n = self.norm();
        if n > max_norm && n > T::zero() {
            self.scale(max_norm / n);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|g| g.is_finite())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Mlp<T> {
    layers: Vec<LayerShape>,
    offsets: Vec<usize>,
    params: Vec<T>,
}

impl<T: Scalar> Mlp<T> {
    /// Zero-parameter network with the given layer widths.
    pub fn zeros(sizes: &[usize], hidden: Activation, output: Activation) -> Result<Self> {
        let layers = Self::shapes(sizes, hidden, output)?;
        let total = layers.iter().map(LayerShape::param_count).sum();
        Self::from_parts(layers, vec![T::zero(); total])
    }

    /// Weights and biases drawn uniformly from `±1/sqrt(fan_in)`.
    pub fn new<R: Rng + ?Sized>(
        sizes: &[usize],
        hidden: Activation,
        output: Activation,
        rng: &mut R,
    ) -> Result<Self> {
        let mut net = Self::zeros(sizes, hidden, output)?;
        for l in 0..net.layers.len() {
            let bound = 1.0 / (net.layers[l].inputs as f64).sqrt();
            let range = net.offsets[l]..net.offsets[l] + net.layers[l].param_count();
            for p in &mut net.params[range] {
                *p = T::of(rng.gen_range(-bound..=bound));
            }
        }
        Ok(net)
    }

    pub fn from_parts(layers: Vec<LayerShape>, params: Vec<T>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::contract("network needs at least one layer"));
        }
        for pair in layers.windows(2) {
            if pair[0].outputs != pair[1].inputs {
                return Err(Error::contract(format!(
                    "layer widths do not chain: {} -> {}",
                    pair[0].outputs, pair[1].inputs
                )));
            }
        }
        if layers.iter().any(|l| l.inputs == 0 || l.outputs == 0) {
            return Err(Error::contract("layer widths must be positive"));
        }
        let mut offsets = Vec::with_capacity(layers.len());
        let mut total = 0;
        for l in &layers {
            offsets.push(total);
            total += l.param_count();
        }
        if params.len() != total {
            return Err(Error::contract(format!(
                "parameter vector has {} entries, layers need {total}",
                params.len()
            )));
        }
        Ok(Self {
            layers,
            offsets,
            params,
        })
    }

    fn shapes(sizes: &[usize], hidden: Activation, output: Activation) -> Result<Vec<LayerShape>> {
        if sizes.len() < 2 {
            return Err(Error::contract("network needs an input and an output width"));
        }
        let n = sizes.len() - 1;
        Ok((0..n)
            .map(|l| LayerShape {
                inputs: sizes[l],
                outputs: sizes[l + 1],
                activation: if l + 1 == n { output } else { hidden },
            })
            .collect())
    }

    pub fn layers(&self) -> &[LayerShape] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].outputs
    }

    pub fn params(&self) -> &[T] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [T] {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn same_shape(&self, other: &Mlp<T>) -> bool {
        self.layers == other.layers
    }

    pub fn forward(&self, input: &[T]) -> Result<Vec<T>> {
        self.check_input(input)?;
        let mut x = input.to_vec();
        let mut y = Vec::new();
        for l in 0..self.layers.len() {
            self.layer_forward(l, &x, &mut y);
            std::mem::swap(&mut x, &mut y);
        }
        Ok(x)
    }

    /// Gradient of `upstream · forward(input)` with respect to the parameters
    /// and to the input.
    pub fn backward(&self, input: &[T], upstream: &[T]) -> Result<(Gradient<T>, Vec<T>)> {
        let mut grad = Gradient::zeros(self.params.len());
        let input_grad = self.accumulate_backward(input, upstream, &mut grad)?;
        Ok((grad, input_grad))
    }

    /// Like [`Mlp::backward`] but adds into an existing gradient buffer.
    pub fn accumulate_backward(
        &self,
        input: &[T],
        upstream: &[T],
        grad: &mut Gradient<T>,
    ) -> Result<Vec<T>> {
        self.check_input(input)?;
        if upstream.len() != self.output_dim() {
            return Err(Error::contract(format!(
                "upstream has length {}, network output is {}",
                upstream.len(),
                self.output_dim()
            )));
        }
        if grad.len() != self.params.len() {
            return Err(Error::contract("gradient buffer does not match parameters"));
        }

        // activations[0] is the input, activations[l + 1] the output of layer l.
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        activations.push(input.to_vec());
        for l in 0..self.layers.len() {
            let mut y = Vec::new();
            self.layer_forward(l, &activations[l], &mut y);
            activations.push(y);
        }

        let mut delta = upstream.to_vec();
        for l in (0..self.layers.len()).rev() {
            let shape = self.layers[l];
            let out = &activations[l + 1];
            for (d, &y) in delta.iter_mut().zip(out) {
                *d *= shape.activation.derivative_from_output(y);
            }
            let x = &activations[l];
            let w_off = self.offsets[l];
            let b_off = w_off + shape.inputs * shape.outputs;
            let mut prev = vec![T::zero(); shape.inputs];
            for o in 0..shape.outputs {
                let d = delta[o];
                grad.0[b_off + o] += d;
                if d == T::zero() {
                    continue;
                }
                let row = w_off + o * shape.inputs;
                let w = &self.params[row..row + shape.inputs];
                let g = &mut grad.0[row..row + shape.inputs];
                for i in 0..shape.inputs {
                    g[i] += d * x[i];
                    prev[i] += d * w[i];
                }
            }
            delta = prev;
        }
        Ok(delta)
    }

    fn check_input(&self, input: &[T]) -> Result<()> {
        if input.len() != self.input_dim() {
            return Err(Error::contract(format!(
                "input has length {}, network expects {}",
                input.len(),
                self.input_dim()
            )));
        }
        Ok(())
    }

    fn layer_forward(&self, l: usize, x: &[T], y: &mut Vec<T>) {
        let shape = self.layers[l];
        let w_off = self.offsets[l];
        let b_off = w_off + shape.inputs * shape.outputs;
        y.clear();
        for o in 0..shape.outputs {
            let row = &self.params[w_off + o * shape.inputs..w_off + (o + 1) * shape.inputs];
            let z = row
                .iter()
                .zip(x)
                .fold(self.params[b_off + o], |acc, (&w, &xi)| acc + w * xi);
            y.push(shape.activation.apply(z));
        }
    }
}

/// `f64` network, the precision used by the trainers.
pub type Mlp64 = Mlp<f64>;
