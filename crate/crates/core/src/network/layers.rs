//! Small parameterised building blocks.

use rand::Rng;

use crate::numerics::{init, Graph, ParamId, ParamStore, Tensor, Var};
use crate::Result;

/// Convolution kernel `[out, in, k, k]` with bias.
#[derive(Debug, Clone)]
pub struct Conv {
    pub kernel: ParamId,
    pub bias: ParamId,
    pub stride: usize,
    pub pad: usize,
}

impl Conv {
    pub fn new(store: &mut ParamStore, name: &str, cin: usize, cout: usize, k: usize, stride: usize, gain: f64, rng: &mut impl Rng) -> Self {
        Conv {
            kernel: store.add(format!("{name}.w"), init::he(rng, &[cout, cin, k, k], cin * k * k, gain)),
            bias: store.add(format!("{name}.b"), Tensor::zeros([cout])),
            stride,
            pad: k / 2,
        }
    }

    pub fn forward(&self, g: &mut Graph<'_>, x: Var) -> Result<Var> {
        let (k, b) = (g.p(self.kernel), g.p(self.bias));
        g.tape.conv2d(x, k, Some(b), self.stride, self.pad)
    }
}

/// Dense layer on a vector, weight stored `[out, in]`.
#[derive(Debug, Clone)]
pub struct Dense {
    pub weight: ParamId,
    pub bias: ParamId,
}

impl Dense {
    pub fn new(store: &mut ParamStore, name: &str, fan_in: usize, fan_out: usize, gain: f64, rng: &mut impl Rng) -> Self {
        Dense {
            weight: store.add(format!("{name}.w"), init::he(rng, &[fan_out, fan_in], fan_in, gain)),
            bias: store.add(format!("{name}.b"), Tensor::zeros([fan_out])),
        }
    }

    pub fn forward(&self, g: &mut Graph<'_>, v: Var) -> Result<Var> {
        let (w, b) = (g.p(self.weight), g.p(self.bias));
        g.tape.linear_vec(v, w, b)
    }

    /// Applied to every row of a matrix.
    pub fn forward_rows(&self, g: &mut Graph<'_>, x: Var) -> Result<Var> {
        let (w, b) = (g.p(self.weight), g.p(self.bias));
        g.tape.linear_rows(x, w, b)
    }
}
