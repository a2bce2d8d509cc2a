//! Quaternion-valued convolutional neural networks.
//!
//! [`quaternion`] and [`tensor`] hold the algebra and planar tensors,
//! [`conv`] the convolution paradigms, [`layers`] fully connected layers,
//! pooling, activations and normalization, [`init`] weight initialization,
//! [`network`] and [`train`] sequential models with explicit backward rules,
//! and [`data`] input mappings and datasets.

pub mod conv;
pub mod data;
pub mod error;
pub mod init;
pub mod layers;
pub mod network;
pub mod quaternion;
pub mod real;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use network::{ActSpec, LayerSpec, ModelSpec, Network};
pub use quaternion::{PolarQuaternion, Quaternion};
pub use real::Real;
pub use tensor::QTensor;
