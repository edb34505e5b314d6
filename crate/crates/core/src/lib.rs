//! Geometry-aware curriculum learning for pose-sequence regression.
//!
//! The crate is organized bottom-up:
//!
//! * [`geometry`]: SE(3) poses, composition, Euler conversion, Jacobians.
//! * [`autodiff`]: a small reverse-mode tape and the Adam optimizer.
//! * [`model`]: the stacked-LSTM regressor.
//! * [`loss`]: the bounded pose regression loss and windowed composition.
//! * [`curriculum`]: plateau-driven stage scheduling of the loss weights.
//! * [`synthdata`]: synthetic trajectories and feature vectors.
//! * [`evaluation`]: segment, RPE and ATE metrics.
//! * [`trainer`]: training runs, ablations and α sweeps.

pub mod autodiff;
pub mod config;
pub mod curriculum;
pub mod dataset;
pub mod error;
pub mod evaluation;
pub mod formats;
pub mod geometry;
pub mod loss;
pub mod model;
pub mod svg;
pub mod synthdata;
pub mod trainer;

pub use error::*;

/// Version string recorded in manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
