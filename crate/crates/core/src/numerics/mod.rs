//! Dense tensors, the reverse-mode tape and the optimizer.
//!
//! Every forward pass records onto a fresh [`Tape`]; there is no graph
//! caching. Kernels work in `f64` so that finite-difference checks have
//! headroom, and all reductions run in a fixed order so that identical
//! inputs give bit-identical values and gradients.

pub mod conv;
pub mod gemm;
pub mod gradcheck;
pub mod init;
pub mod ops;
pub mod optim;
pub mod params;
pub mod tape;
pub mod tensor;

pub use optim::{cosine_lr, AdamW, OptimizerState};
pub use params::{Graph, ParamId, ParamStore};
pub use tape::{Grads, Tape, Var};
pub use tensor::{FeatureGrid, Matrix, Tensor};
