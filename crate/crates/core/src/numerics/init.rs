//! Parameter initialisers.

use rand::Rng;

use super::Tensor;

/// Uniform in `[-bound, bound]`.
pub fn uniform(rng: &mut impl Rng, shape: &[usize], bound: f64) -> Tensor {
    Tensor::from_fn(shape, |_| rng.gen_range(-bound..=bound))
}

/// He-uniform for a layer with `fan_in` inputs, times `gain`.
pub fn he(rng: &mut impl Rng, shape: &[usize], fan_in: usize, gain: f64) -> Tensor {
    uniform(rng, shape, gain * (6.0 / fan_in as f64).sqrt())
}
