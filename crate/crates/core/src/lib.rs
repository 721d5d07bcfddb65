//! Two-hand mesh reconstruction by decoupled iterative refinement.
//!
//! The pipeline alternates between two representations of the same scene:
//! compact per-joint feature vectors (where the skeleton graph convolution
//! and the two-hand transformer exchange information) and dense feature maps
//! (where convolutions refine pixel-aligned evidence). Joint features are read
//! out of the maps by bilinear sampling at the projected joints and written
//! back by splatting every joint into its own feature plane.
//!
//! Everything needed to train and evaluate the model is in this crate:
//!
//! * [`numerics`]: dense tensors, a define-by-run reverse-mode tape, AdamW.
//! * [`hand_model`]: a procedural parametric hand with linear blend skinning.
//! * [`camera`]: weak-perspective projection, joint sampling, plane projection.
//! * [`interaction`]: skeleton GCN and the two-hand transformer.
//! * [`network`]: encoder, initial estimate, refinement stages, pixel heads.
//! * [`losses`] and [`metrics`]: training objectives and evaluation suite.
//! * [`synth`]: the synthetic two-hand scene generator and rasterizer.
//! * [`harness`]: configuration, training, evaluation, inference, ablations.

pub mod camera;
pub mod error;
pub mod geom;
pub mod hand_model;
pub mod harness;
pub mod interaction;
pub mod losses;
pub mod metrics;
pub mod network;
pub mod numerics;
pub mod synth;

pub use error::{Error, Result};
