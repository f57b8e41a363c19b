//! Desk-scale CNN library with a built-in, differentiable saliency head.
//!
//! The saliency head back-projects post-ReLU feature maps to an
//! input-resolution mask during the forward pass. Because the head is part
//! of the computation graph, a loss on the mask (against a ground-truth
//! segmentation) trains the network to keep its evidence inside the
//! segmented region, while the label prediction path stays untouched.
//!
//! Modules:
//! - [`tensor`]: dense f64 arrays, no broadcasting
//! - [`ops`]: conv / relu / unit-weight transposed conv / residual block /
//!   pooling / linear / sigmoid, each with a hand-written backward
//! - [`saliency`]: the mask head and its exact reverse-mode derivative
//! - [`losses`]: BCE plus the full/half focus mask penalties
//! - [`model`]: specs, parameter init, traced forward, backprop, checkpoints
//! - [`optim`]: SGD with momentum, Adam, two-phase schedule
//! - [`data`]: synthetic shapes dataset, bbox mask coarsening, PGM/PPM,
//!   manifests
//! - [`metrics`]: AP / ROC-AUC / PR curves / mask diagnostics

pub mod data;
pub mod error;
pub mod losses;
pub mod metrics;
pub mod model;
pub mod ops;
pub mod optim;
pub mod rng;
pub mod saliency;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::{ReduceOp, Tensor};
