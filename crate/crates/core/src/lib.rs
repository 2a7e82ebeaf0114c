//! Genotype-conditional diffusion toolkit for histopathology patches.
//!
//! - [`schedule`]: noise schedule constants, SNR and loss weights
//! - [`diffusion`]: forward noising, weighted objective, ancestral sampling
//! - [`denoiser`]: the noise predictor interface and a reference network
//! - [`train`]: training loop and the built-in toy task
//! - [`stainnorm`]: optical-density stain factorization and color transfer
//! - [`patchkit`]: annotation-driven tiling and the dataset manifest
//! - [`metrics`]: IS, FID, sFID, improved precision/recall, Fisher exact test
//! - [`checkpoint`], [`config`]: persisted model and run settings
//! - [`image`]: RGB images and PPM I/O

pub mod checkpoint;
pub mod config;
pub mod denoiser;
pub mod diffusion;
pub mod error;
pub mod image;
pub mod metrics;
pub mod patchkit;
pub mod schedule;
pub mod stainnorm;
pub mod train;

pub use error::{Error, Result};
