//! Post-processing of ensemble weather forecasts into calibrated Gaussian
//! predictive distributions, with low-dimensional latent codes of spatial
//! forecast fields (convolutional autoencoder, PCA reference) feeding a
//! neural distributional regression model, and proper-score verification.

pub mod error;
pub mod evaluation;
pub mod numerics;
pub mod bundle;
pub mod convae;
pub mod pca;
pub mod postproc;
pub mod dataio;
pub mod rng;
pub mod scoring;

pub use error::{Error, Result};
