//! Central finite-difference gradient checking.

use super::tape::{Tape, Var};
use super::tensor::Tensor;
use crate::Result;

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    /// Largest elementwise relative error over all inputs.
    pub max_rel_error: f64,
    /// Input index and flat position of the worst entry.
    pub worst: (usize, usize),
    pub analytic: f64,
    pub numeric: f64,
}

/// Relative error used throughout the gradient suite.
///
/// The denominator is floored at `1e-3` of the gradient's largest entry so
/// that entries which are exactly zero analytically are judged against the
/// scale of the whole gradient rather than against zero.
pub fn relative_error(analytic: f64, numeric: f64, scale: f64) -> f64 {
    let denom = analytic.abs().max(numeric.abs()).max(1e-3 * scale).max(1e-12);
    (analytic - numeric).abs() / denom
}

/// Compares reverse-mode gradients of a scalar function against central
/// differences with step `h`.
pub fn check_gradients<F>(inputs: &[Tensor], h: f64, f: F) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone(), true)).collect();
    let loss = f(&mut tape, &vars)?;
    let grads = tape.backward(loss)?;
    let analytic: Vec<Vec<f64>> = vars.iter().map(|&v| grads.get_or_zeros(v)).collect();

    let eval = |perturbed: &[Tensor]| -> Result<f64> {
        let mut t = Tape::new();
        let vs: Vec<Var> = perturbed.iter().map(|x| t.constant(x.clone())).collect();
        let out = f(&mut t, &vs)?;
        Ok(t.value(out).item())
    };

    let mut numeric: Vec<Vec<f64>> = Vec::with_capacity(inputs.len());
    let mut work: Vec<Tensor> = inputs.to_vec();
    for i in 0..inputs.len() {
        let mut col = vec![0.0; inputs[i].len()];
        for j in 0..inputs[i].len() {
            let orig = work[i].data()[j];
            work[i].data_mut()[j] = orig + h;
            let fp = eval(&work)?;
            work[i].data_mut()[j] = orig - h;
            let fm = eval(&work)?;
            work[i].data_mut()[j] = orig;
            col[j] = (fp - fm) / (2.0 * h);
        }
        numeric.push(col);
    }

    let scale = numeric
        .iter()
        .flatten()
        .chain(analytic.iter().flatten())
        .fold(0.0f64, |m, v| m.max(v.abs()));
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: (0, 0),
        analytic: 0.0,
        numeric: 0.0,
    };
    for i in 0..inputs.len() {
        for j in 0..inputs[i].len() {
            let e = relative_error(analytic[i][j], numeric[i][j], scale);
            if e > report.max_rel_error {
                report = GradCheckReport {
                    max_rel_error: e,
                    worst: (i, j),
                    analytic: analytic[i][j],
                    numeric: numeric[i][j],
                };
            }
        }
    }
    Ok(report)
}

/// Reduces a tensor-valued output to a scalar with fixed pseudo-random
/// weights so that every output entry contributes to the checked gradient.
pub fn random_projection(tape: &mut Tape, out: Var, seed: u64) -> Result<Var> {
    let n = tape.value(out).len();
    let mut state = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
    let w = Tensor::from_fn(tape.value(out).shape(), |_| {
        state = state
            .wrapping_mul(6364136223846793005)
            .wrapping_add(1442695040888963407);
        ((state >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
    });
    debug_assert_eq!(w.len(), n);
    tape.dot_const(out, &w)
}
