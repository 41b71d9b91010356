//! Conditional GAN synthesis of minority-class multivariate time series.
//!
//! The crate is organised bottom-up:
//!
//! * [`data`]: sample model, ingestion, preprocessing and toy data.
//! * [`autodiff`]: a small reverse-mode engine with dense and LSTM layers.
//! * [`cgan`]: generator, discriminator, losses, training and synthesis.
//! * [`metrics`]: histogram KL divergence and Adversarial Accuracy.
//! * [`classify`]: RBF-kernel SVM and the TSS / HSS2 skill scores.

pub mod autodiff;
pub mod classify;
pub mod cgan;
pub mod data;
pub mod error;
pub mod metrics;

pub use error::{Error, Result};
