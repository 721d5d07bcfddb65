//! Joint-space interaction: a skeleton graph convolution inside each hand
//! and a transformer over the 42 joints of both hands.

mod gcn;
mod transformer;

pub use gcn::{GcnLayer, GcnStack, SkeletonGraph};
pub use transformer::{TransformerLayer, TransformerStack, NUM_TOKENS};
