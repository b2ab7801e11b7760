//! Gaussian-mask mixing augmentation, a large-kernel gated convolutional
//! classifier, and biometric evaluation, on top of a small reverse-mode
//! autodiff engine.
//!
//! Module map:
//!
//! * [`engine`]: dense tensors, the recording graph, optimizers, schedules
//!   and parameter checkpoints.
//! * [`mix`]: vanilla Mixup and StarMix (Gaussian masks, effective ratio,
//!   threshold routing).
//! * [`laknet`]: the LaKNet classifier.
//! * [`data`]: dataset scanning, image loading, augmentation, the synthetic
//!   vein generator and the batch loader.
//! * [`eval`]: top-1, FAR/FRR/EER sweeps, occlusion and activation maps.
//! * [`run`]: run configuration and the command implementations the CLI
//!   binds to.

pub mod data;
pub mod engine;
mod error;
pub mod eval;
pub mod laknet;
pub mod mix;
pub mod rng;
pub mod run;

pub use engine::tensor::{Scalar, Tensor};
pub use error::{Error, Result};
