//! Define-by-run reverse-mode differentiation.
//!
//! A [`Tape`] owns every intermediate value of one forward pass. Each
//! recorded primitive stores a backward closure that reads the upstream
//! gradient and accumulates into the gradients of its inputs. Nodes are
//! appended in evaluation order, so the node list is already topologically
//! sorted and [`Tape::backward`] is a single reverse sweep.

use super::tensor::Tensor;
use crate::{Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(pub(crate) usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// What a backward closure sees of the forward pass.
pub struct BackwardCtx<'a> {
    pub grad: &'a [f64],
    pub out: &'a Tensor,
    nodes: &'a [Node],
}

impl BackwardCtx<'_> {
    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }
}

type BackwardFn = Box<dyn Fn(&BackwardCtx<'_>, &mut Grads)>;

struct Node {
    value: Tensor,
    requires_grad: bool,
    backward: Option<BackwardFn>,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradient buffers, one per node, allocated on first accumulation.
pub struct Grads {
    bufs: Vec<Option<Vec<f64>>>,
    requires: Vec<bool>,
    lens: Vec<usize>,
}

impl Grads {
    /// Whether gradient flowing into `v` is needed at all.
    #[inline]
    pub fn wants(&self, v: Var) -> bool {
        self.requires[v.0]
    }

    /// Mutable gradient buffer for `v`, or `None` when `v` needs no gradient.
    pub fn slot(&mut self, v: Var) -> Option<&mut [f64]> {
        if !self.requires[v.0] {
            return None;
        }
        let len = self.lens[v.0];
        Some(self.bufs[v.0].get_or_insert_with(|| vec![0.0; len]))
    }

    pub fn get(&self, v: Var) -> Option<&[f64]> {
        self.bufs.get(v.0).and_then(|b| b.as_deref())
    }

    /// Gradient of `v`, zeros if nothing flowed into it.
    pub fn get_or_zeros(&self, v: Var) -> Vec<f64> {
        self.get(v)
            .map(<[f64]>::to_vec)
            .unwrap_or_else(|| vec![0.0; self.lens[v.0]])
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Records an input. `requires_grad` leaves receive gradients on backward.
    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            requires_grad,
            backward: None,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Records a primitive application. The backward closure is dropped when
    /// no input needs a gradient.
    pub fn push(
        &mut self,
        value: Tensor,
        inputs: &[Var],
        backward: impl Fn(&BackwardCtx<'_>, &mut Grads) + 'static,
    ) -> Var {
        debug_assert!(inputs.iter().all(|v| v.0 < self.nodes.len()));
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node {
            value,
            requires_grad,
            backward: requires_grad.then(|| Box::new(backward) as BackwardFn),
        });
        Var(self.nodes.len() - 1)
    }

    /// Propagates d`loss`/d(node) for every node that requires a gradient.
    pub fn backward(&self, loss: Var) -> Result<Grads> {
        let n = self.nodes.len();
        if loss.0 >= n {
            return Err(Error::InvalidInput("loss is not on this tape".into()));
        }
        if self.nodes[loss.0].value.len() != 1 {
            return Err(Error::shape(
                "backward",
                format!(
                    "loss must be a scalar, got shape {:?}",
                    self.nodes[loss.0].value.shape()
                ),
            ));
        }
        let mut grads = Grads {
            bufs: (0..n).map(|_| None).collect(),
            requires: self.nodes.iter().map(|n| n.requires_grad).collect(),
            lens: self.nodes.iter().map(|n| n.value.len()).collect(),
        };
        if !self.nodes[loss.0].requires_grad {
            return Ok(grads);
        }
        grads.bufs[loss.0] = Some(vec![1.0]);
        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            let Some(backward) = node.backward.as_ref() else {
                continue;
            };
            let Some(g) = grads.bufs[i].take() else {
                continue;
            };
            let ctx = BackwardCtx {
                grad: &g,
                out: &node.value,
                nodes: &self.nodes,
            };
            backward(&ctx, &mut grads);
            grads.bufs[i] = Some(g);
        }
        Ok(grads)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_gives_ones() {
        let mut t = Tape::new();
        let x = t.leaf(Tensor::new([2, 3], vec![1.0, -2.0, 3.0, 0.5, 0.0, 9.0]).unwrap(), true);
        let s = t.sum(x);
        let g = t.backward(s).unwrap();
        assert_eq!(g.get(x).unwrap(), &[1.0; 6]);
    }

    #[test]
    fn sum_of_squares_gradient() {
        let mut t = Tape::new();
        let x = t.leaf(Tensor::from_vec(vec![1.0, -2.0]), true);
        let sq = t.mul(x, x).unwrap();
        let s = t.sum(sq);
        let g = t.backward(s).unwrap();
        assert_eq!(g.get(x).unwrap(), &[2.0, -4.0]);
    }

    #[test]
    fn non_scalar_loss_rejected() {
        let mut t = Tape::new();
        let x = t.leaf(Tensor::from_vec(vec![1.0, 2.0]), true);
        let y = t.scale(x, 2.0);
        assert!(matches!(t.backward(y), Err(Error::Shape { .. })));
    }

    #[test]
    fn constants_get_no_gradient() {
        let mut t = Tape::new();
        let x = t.leaf(Tensor::from_vec(vec![1.0, 2.0]), true);
        let c = t.constant(Tensor::from_vec(vec![3.0, 4.0]));
        let y = t.mul(x, c).unwrap();
        let s = t.sum(y);
        let g = t.backward(s).unwrap();
        assert_eq!(g.get(x).unwrap(), &[3.0, 4.0]);
        assert!(g.get(c).is_none());
    }
}
