//! Malignancy scoring of 3D nodule patches.
//!
//! The pipeline reduces a cubic CT patch to a three-channel image of median
//! intensity projections, augments it, learns features with a small
//! convolutional network trained from scratch, and regresses a continuous
//! malignancy score with Gaussian-process regression. Linear baselines,
//! attribute fusion and a cross-validation harness sit alongside.
//!
//! Numeric code is generic over [`Real`] (`f32`/`f64`); the aliases below fix
//! the common `f64` instantiations.

// NaN-rejecting guards are written as negated comparisons on purpose.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod augment;
pub mod baselines;
pub mod cnn;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod gpr;
pub mod linalg;
pub mod scalar;
pub mod seed;
pub mod tensor;
pub mod volume;

pub use error::{Error, ErrorClass, Result};
pub use scalar::Real;

pub type Volume64 = volume::Volume<f64>;
pub type Volume32 = volume::Volume<f32>;
pub type Tensor64 = tensor::ProjectionTensor<f64>;
pub type Tensor32 = tensor::ProjectionTensor<f32>;
pub type NetworkParams64 = cnn::NetworkParams<f64>;
pub type GpModel64 = gpr::GpModel<f64>;
pub type KernelConfig64 = gpr::KernelConfig<f64>;
pub type LinearModel64 = baselines::LinearModel<f64>;
