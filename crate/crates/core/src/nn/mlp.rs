use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Tanh,
    Relu,
}

impl Activation {
    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => z.tanh(),
            Activation::Relu => z.max(0.0),
        }
    }

    /// Derivative expressed through the activation's output `a`.
    #[inline]
    fn slope(self, a: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - a * a,
            Activation::Relu => {
                if a > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    pub(crate) fn code(self) -> u8 {
        match self {
            Activation::Tanh => 0,
            Activation::Relu => 1,
        }
    }

    pub(crate) fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Activation::Tanh),
            1 => Some(Activation::Relu),
            _ => None,
        }
    }
}

/// Fully-connected network with a linear output layer.
///
/// Parameters are one flat vector: for each layer the `out × in` weight
/// matrix (row-major) followed by its `out` biases.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    widths: Vec<usize>,
    activation: Activation,
    params: Vec<f64>,
    offsets: Vec<usize>,
}

fn layer_offsets(widths: &[usize]) -> Vec<usize> {
    let mut offsets = Vec::with_capacity(widths.len());
    let mut at = 0;
    for w in widths.windows(2) {
        offsets.push(at);
        at += w[0] * w[1] + w[1];
    }
    offsets.push(at);
    offsets
}

impl Mlp {
    pub fn zeros(widths: &[usize], activation: Activation) -> Result<Self> {
        if widths.len() < 2 || widths.contains(&0) {
            return Err(Error::invalid(format!("bad layer widths {widths:?}")));
        }
        let offsets = layer_offsets(widths);
        Ok(Self {
            widths: widths.to_vec(),
            activation,
            params: vec![0.0; *offsets.last().unwrap()],
            offsets,
        })
    }

    /// Weights and biases `U(-1/√fan_in, 1/√fan_in)`.
    pub fn init<R: Rng + ?Sized>(widths: &[usize], activation: Activation, rng: &mut R) -> Result<Self> {
        let mut net = Self::zeros(widths, activation)?;
        for l in 0..net.n_layers() {
            let (fan_in, fan_out) = (widths[l], widths[l + 1]);
            let bound = 1.0 / (fan_in as f64).sqrt();
            let at = net.offsets[l];
            for w in &mut net.params[at..at + (fan_in + 1) * fan_out] {
                *w = rng.random_range(-bound..bound);
            }
        }
        Ok(net)
    }

    pub fn from_params(widths: &[usize], activation: Activation, params: Vec<f64>) -> Result<Self> {
        let mut net = Self::zeros(widths, activation)?;
        if params.len() != net.params.len() {
            return Err(Error::DimMismatch {
                expected: net.params.len(),
                got: params.len(),
            });
        }
        net.params = params;
        Ok(net)
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn n_layers(&self) -> usize {
        self.widths.len() - 1
    }

    pub fn input_dim(&self) -> usize {
        self.widths[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.widths.last().unwrap()
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    /// Weight matrix and bias vector of layer `l`, mutably.
    pub fn layer_mut(&mut self, l: usize) -> (&mut [f64], &mut [f64]) {
        let at = self.offsets[l];
        let nw = self.widths[l] * self.widths[l + 1];
        let (w, b) = self.params[at..self.offsets[l + 1]].split_at_mut(nw);
        (w, b)
    }

    /// Length of the activation cache used by [`Mlp::forward_cached`].
    pub fn cache_len(&self) -> usize {
        self.widths.iter().sum()
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        if input.len() != self.input_dim() {
            return Err(Error::DimMismatch {
                expected: self.input_dim(),
                got: input.len(),
            });
        }
        let mut cache = vec![0.0; self.cache_len()];
        self.forward_cached(input, &mut cache);
        Ok(cache[cache.len() - self.output_dim()..].to_vec())
    }

    /// Forward pass that stores the input and every layer output in `cache`
    /// (length [`Mlp::cache_len`]); the network output is the cache's tail.
    pub fn forward_cached(&self, input: &[f64], cache: &mut [f64]) {
        debug_assert_eq!(cache.len(), self.cache_len());
        let n_in = self.widths[0];
        cache[..n_in].copy_from_slice(input);
        let mut start = 0;
        let last = self.n_layers() - 1;
        for l in 0..self.n_layers() {
            let (fan_in, fan_out) = (self.widths[l], self.widths[l + 1]);
            let at = self.offsets[l];
            let weights = &self.params[at..at + fan_in * fan_out];
            let biases = &self.params[at + fan_in * fan_out..at + fan_in * fan_out + fan_out];
            let (done, rest) = cache.split_at_mut(start + fan_in);
            let a_in = &done[start..];
            let a_out = &mut rest[..fan_out];
            for o in 0..fan_out {
                let row = &weights[o * fan_in..(o + 1) * fan_in];
                let mut acc = biases[o];
                for (w, a) in row.iter().zip(a_in) {
                    acc += w * a;
                }
                a_out[o] = if l == last { acc } else { self.activation.apply(acc) };
            }
            start += fan_in;
        }
    }

    /// Reverse sweep through one cached forward pass.
    ///
    /// Accumulates `∂L/∂θ` into `grad_params` and writes `∂L/∂input` into
    /// `grad_input`. `scratch` is resized as needed.
    pub fn backward_cached(
        &self,
        cache: &[f64],
        grad_out: &[f64],
        grad_params: &mut [f64],
        grad_input: &mut [f64],
        scratch: &mut Vec<f64>,
    ) {
        let max_w = *self.widths.iter().max().unwrap();
        scratch.resize(2 * max_w, 0.0);
        let (delta, prev) = scratch.split_at_mut(max_w);
        let n_out = self.output_dim();
        delta[..n_out].copy_from_slice(grad_out);
        let mut end = cache.len() - n_out;
        for l in (0..self.n_layers()).rev() {
            let (fan_in, fan_out) = (self.widths[l], self.widths[l + 1]);
            let a_in = &cache[end - fan_in..end];
            let at = self.offsets[l];
            let weights = &self.params[at..at + fan_in * fan_out];
            let (gw, gb) = grad_params[at..at + fan_in * fan_out + fan_out].split_at_mut(fan_in * fan_out);
            prev[..fan_in].iter_mut().for_each(|p| *p = 0.0);
            for o in 0..fan_out {
                let g = delta[o];
                if g == 0.0 {
                    continue;
                }
                gb[o] += g;
                let row = &weights[o * fan_in..(o + 1) * fan_in];
                let grow = &mut gw[o * fan_in..(o + 1) * fan_in];
                for i in 0..fan_in {
                    grow[i] += g * a_in[i];
                    prev[i] += g * row[i];
                }
            }
            if l > 0 {
                for i in 0..fan_in {
                    prev[i] *= self.activation.slope(a_in[i]);
                }
            }
            delta[..fan_in].copy_from_slice(&prev[..fan_in]);
            end -= fan_in;
        }
        grad_input.copy_from_slice(&delta[..self.widths[0]]);
    }
}
