//! Training and analog-noise robustness benchmarking for small neural
//! networks.
//!
//! The crate trains dense and residual convolutional classifiers under
//! configurable learning rates and optimizers, perturbs trained weights
//! with SNR-scaled additive white Gaussian noise, and reports accuracy
//! degradation metrics. A separate instrument measures the minibatch
//! gradient noise power against its `alpha^2 * C / |B|` bound.

pub mod config;
pub mod data;
pub mod error;
pub mod gradnoise;
pub mod nn;
pub mod noise;
pub mod optim;
pub mod report;
pub mod rng;
pub mod sweep;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use rng::{gaussian_sample, glorot_uniform_init, RngStream};
pub use tensor::{tensor_std, Dtype, Scalar, Tensor};
