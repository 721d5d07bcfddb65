use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::params::ParamStore;
use crate::{Error, Result};

/// Cosine-decayed learning rate: `base · ½(1 + cos(π·epoch/total))`.
pub fn cosine_lr(base: f64, epoch: usize, total_epochs: usize) -> f64 {
    let t = epoch.min(total_epochs) as f64 / total_epochs.max(1) as f64;
    base * 0.5 * (1.0 + (PI * t).cos())
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OptimizerState {
    pub first_moment: Vec<Vec<f64>>,
    pub second_moment: Vec<Vec<f64>>,
    pub step: u64,
    pub base_lr: f64,
    pub weight_decay: f64,
}

/// Adam with decoupled weight decay.
#[derive(Clone, Debug)]
pub struct AdamW {
    pub state: OptimizerState,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamW {
    pub fn new(params: &ParamStore, base_lr: f64, weight_decay: f64) -> Self {
        let zeros: Vec<Vec<f64>> = params.iter().map(|(_, t)| vec![0.0; t.len()]).collect();
        AdamW {
            state: OptimizerState {
                first_moment: zeros.clone(),
                second_moment: zeros,
                step: 0,
                base_lr,
                weight_decay,
            },
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    /// One update at the learning rate the cosine schedule gives for `epoch`.
    ///
    /// Rejects the whole step, leaving parameters and moments untouched, if
    /// any gradient entry is non-finite.
    pub fn step(
        &mut self,
        params: &mut ParamStore,
        grads: &[Vec<f64>],
        epoch: usize,
        total_epochs: usize,
    ) -> Result<f64> {
        if total_epochs == 0 {
            return Err(Error::InvalidInput("total_epochs must be >= 1".into()));
        }
        if grads.len() != params.len() {
            return Err(Error::shape(
                "adamw",
                format!("{} gradients for {} parameters", grads.len(), params.len()),
            ));
        }
        for (i, (g, (name, p))) in grads.iter().zip(params.iter()).enumerate() {
            if g.len() != p.len() {
                return Err(Error::shape("adamw", format!("gradient {i} ({name}) length")));
            }
            if let Some(j) = g.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("gradient of `{name}` at index {j}")));
            }
        }
        let lr = cosine_lr(self.state.base_lr, epoch, total_epochs);
        self.state.step += 1;
        let t = self.state.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        let wd = self.state.weight_decay;
        for (i, g) in grads.iter().enumerate() {
            let p = params.tensor_mut_by_index(i).data_mut();
            let m = &mut self.state.first_moment[i];
            let v = &mut self.state.second_moment[i];
            for j in 0..p.len() {
                m[j] = self.beta1 * m[j] + (1.0 - self.beta1) * g[j];
                v[j] = self.beta2 * v[j] + (1.0 - self.beta2) * g[j] * g[j];
                if lr == 0.0 {
                    continue;
                }
                let mhat = m[j] / bc1;
                let vhat = v[j] / bc2;
                p[j] -= lr * wd * p[j];
                p[j] -= lr * mhat / (vhat.sqrt() + self.eps);
            }
        }
        Ok(lr)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Tensor;

    #[test]
    fn cosine_schedule_points() {
        assert_eq!(cosine_lr(3e-4, 0, 50), 3e-4);
        assert_eq!(cosine_lr(3e-4, 50, 50), 0.0);
        assert!((cosine_lr(3e-4, 25, 50) - 1.5e-4).abs() < 1e-18);
    }

    #[test]
    fn zero_gradient_keeps_params() {
        let mut p = ParamStore::new();
        p.add("w", Tensor::from_vec(vec![1.0, -2.0, 3.0]));
        let before = p.clone();
        let mut opt = AdamW::new(&p, 1e-2, 0.0);
        opt.step(&mut p, &[vec![0.0; 3]], 0, 10).unwrap();
        assert_eq!(p, before);
        assert_eq!(opt.state.step, 1);
    }

    #[test]
    fn non_finite_gradient_rejected() {
        let mut p = ParamStore::new();
        p.add("w", Tensor::from_vec(vec![1.0]));
        let mut opt = AdamW::new(&p, 1e-2, 0.01);
        assert!(matches!(
            opt.step(&mut p, &[vec![f64::NAN]], 0, 10),
            Err(Error::NonFinite(_))
        ));
        assert_eq!(opt.state.step, 0);
        assert_eq!(p.iter().next().unwrap().1.data(), &[1.0]);
    }
}
