use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Array, Tape, Var};
use crate::Result;

/// Affine layer `y = x W + b` with `W: in x out`, `b: 1 x out`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Linear {
    pub weight: Array,
    pub bias: Array,
}

#[derive(Debug, Clone, Copy)]
pub struct LinearVars {
    pub weight: Var,
    pub bias: Var,
}

impl Linear {
    /// Weights and biases from `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`.
    pub fn uniform<R: Rng + ?Sized>(fan_in: usize, fan_out: usize, rng: &mut R) -> Self {
        let bound = 1.0 / libm::sqrt(fan_in as f64);
        let mut draw = |n: usize| -> Vec<f64> {
            (0..n).map(|_| rng.random_range(-bound..bound)).collect()
        };
        let weight = Array::from_vec(fan_in, fan_out, draw(fan_in * fan_out)).expect("shape");
        let bias = Array::row_vector(draw(fan_out));
        Self { weight, bias }
    }

    /// Rectangular identity weight, zero bias.
    pub fn identity(fan_in: usize, fan_out: usize) -> Self {
        let mut weight = Array::zeros(fan_in, fan_out);
        for i in 0..fan_in.min(fan_out) {
            weight.set(i, i, 1.0);
        }
        Self {
            weight,
            bias: Array::zeros(1, fan_out),
        }
    }

    pub fn in_dim(&self) -> usize {
        self.weight.rows()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.cols()
    }

    pub fn forward(&self, x: &Array) -> Result<Array> {
        x.affine(&self.weight, &self.bias)
    }

    pub fn register(&self, tape: &mut Tape) -> LinearVars {
        LinearVars {
            weight: tape.param(self.weight.clone()),
            bias: tape.param(self.bias.clone()),
        }
    }

    pub fn params(&self) -> [&Array; 2] {
        [&self.weight, &self.bias]
    }

    pub fn params_mut(&mut self) -> [&mut Array; 2] {
        [&mut self.weight, &mut self.bias]
    }
}

impl LinearVars {
    pub fn forward(&self, tape: &mut Tape, x: Var) -> Result<Var> {
        tape.affine(x, self.weight, self.bias)
    }
}

/// Dense network with `tanh` between layers and an identity output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub layers: Vec<Linear>,
}

#[derive(Debug, Clone)]
pub struct MlpVars {
    pub layers: Vec<LinearVars>,
}

impl Mlp {
    /// `in_dim -> hidden[0] -> ... -> out_dim`.
    pub fn new<R: Rng + ?Sized>(in_dim: usize, hidden: &[usize], out_dim: usize, rng: &mut R) -> Self {
        let mut dims = Vec::with_capacity(hidden.len() + 2);
        dims.push(in_dim);
        dims.extend_from_slice(hidden);
        dims.push(out_dim);
        let layers = dims.windows(2).map(|w| Linear::uniform(w[0], w[1], rng)).collect();
        Self { layers }
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn out_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim()
    }

    pub fn forward(&self, x: &Array) -> Result<Array> {
        let mut h = self.layers[0].forward(x)?;
        for layer in &self.layers[1..] {
            h = layer.forward(&h.map(libm::tanh))?;
        }
        Ok(h)
    }

    pub fn register(&self, tape: &mut Tape) -> MlpVars {
        MlpVars {
            layers: self.layers.iter().map(|l| l.register(tape)).collect(),
        }
    }

    pub fn params(&self) -> impl Iterator<Item = &Array> {
        self.layers.iter().flat_map(Linear::params)
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut Array> {
        self.layers.iter_mut().flat_map(Linear::params_mut)
    }
}

impl MlpVars {
    pub fn forward(&self, tape: &mut Tape, x: Var) -> Result<Var> {
        let mut h = self.layers[0].forward(tape, x)?;
        for layer in &self.layers[1..] {
            let act = tape.tanh(h);
            h = layer.forward(tape, act)?;
        }
        Ok(h)
    }

    pub fn vars(&self) -> impl Iterator<Item = Var> + '_ {
        self.layers.iter().flat_map(|l| [l.weight, l.bias])
    }
}
