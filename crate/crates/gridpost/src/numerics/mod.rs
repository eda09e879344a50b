//! Dense-array math and the differentiable layer set used by the forecast
//! models: dense, 2-D convolution, transposed convolution, max-pooling and
//! embedding lookup, with reverse-mode gradients, Adam, and a
//! finite-difference gradient checker.
//!
//! "Convolution" follows the cross-correlation convention (no kernel flip)
//! with zero padding. Training code instantiates networks at f32;
//! verification oracles run the same code at f64.

pub mod adam;
pub mod gradcheck;
pub mod layers;
pub mod network;
pub mod ops;
mod scalar;
mod tensor;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use gradcheck::{grad_check, grad_check_network, GradCheckReport};
pub use layers::{Activation, Layer, LayerSpec};
pub use network::{Gradients, Network, Trace};
pub use ops::{
    conv2d_forward, dense_forward, embedding_backward, embedding_forward, maxpool2d,
    tconv2d_forward,
};
pub use scalar::Scalar;
pub use tensor::{dot, Tensor};
