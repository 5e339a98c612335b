//! Generative models and utility metrics for sparse monthly transactional
//! profiles.
//!
//! The library trains small generative networks (a VAE and conditional
//! GAN/Wasserstein-GAN variants) on per-client, per-category monthly spend
//! vectors, generates synthetic profiles under three regimes (from real
//! rows, from auxiliary attributes plus noise, from noise alone), and
//! scores the output with sparsity, per-feature Wasserstein-distance,
//! paired cosine-distance, and threshold-insight metrics. A parametric
//! population simulator stands in for real bank data, and an optional
//! differentially private training mode clips and perturbs per-example
//! gradients.
//!
//! Everything is seeded: a fixed seed reproduces simulation, training, and
//! generation bit-for-bit on any platform.

pub mod data;
pub mod error;
pub mod metrics;
pub mod models;
pub mod num;
pub mod optim;

pub use error::{Error, Result};
