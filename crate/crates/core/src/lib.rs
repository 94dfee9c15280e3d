//! Core of the Generalized Probabilistic U-Net: a conditional-VAE
//! segmentation model whose latent-space distribution is selectable among an
//! axis-aligned Gaussian, a full-covariance Gaussian (Cholesky
//! parameterization) and Gaussian mixtures with Gumbel-Softmax
//! straight-through sampling.
//!
//! Everything in this crate is pure computation over heap tensors: the
//! autodiff tape, the distribution layer, the model, the training loop, the
//! synthetic data generator and the evaluation metrics. File formats, CSV
//! emission and the command-line interface live in the companion `genpunet`
//! crate.

#![no_std]

extern crate alloc;

pub mod noise;
pub mod tensor;

pub use tensor::{Tape, Tensor, TensorError, Var};
