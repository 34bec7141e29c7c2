//! Permission-feature malware classification toolkit.
//!
//! [`manifest`] parses app metadata into records, [`pipeline`] turns
//! records into filtered binary feature datasets, [`nn`] provides the
//! from-scratch differentiable layers, [`train`] and [`eval`] run the
//! learning loop and the metric suite, and [`checkpoint`] persists
//! weights. The numeric core is generic over [`Scalar`] (`f32`/`f64`);
//! the aliases below pin the default training precision.

pub mod checkpoint;
pub mod dataset;
pub mod eval;
pub mod manifest;
pub mod nn;
pub mod pipeline;
pub mod rng;
pub mod scalar;
pub mod train;

pub use scalar::Scalar;

/// Default training precision.
pub type Tensor = nn::TensorBuffer<f64>;
/// Single-precision tensor (the checkpoint storage width).
pub type Tensor32 = nn::TensorBuffer<f32>;
/// Model weights at training precision.
pub type Params = nn::Parameters<f64>;
