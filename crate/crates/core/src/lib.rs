//! Single-step inverse design for simulator-backed problems.
//!
//! The crate learns `P(x | v)`: the distribution of design parameters `x`
//! (alloy compositions) given a partially specified target `v` (the observed
//! part of a phase diagram). Hybrid models pair a generative imputer (CVAE or
//! CGAN) that reconstructs the unspecified part `h` with a discriminative
//! predictor (MLP or mixture density network) that maps the completed target
//! to designs. Everything needed to reproduce the experiments lives here: a
//! synthetic forward simulator with a known many-to-one symmetry, dataset
//! builders (including a Bayesian-optimisation driven one), training, inference
//! with Gumbel mode selection, and the evaluation harness.
//!
//! Module map:
//!
//! - [`tensor`]: dense tensors, a define-by-run reverse-mode tape, dense layers, Adam.
//! - [`models`]: MDN head, CVAE and CGAN imputers, their losses, random forest baseline.
//! - [`simulator`]: deterministic pseudo phase-diagram simulator and the base alloy table.
//! - [`datagen`]: neighbourhood and BO-driven datasets, masks, the GP/EI engine.
//! - [`training`]: k-fold splits, training loops, checkpoints.
//! - [`inference`]: imputation, conditional prediction, design extraction.
//! - [`evaluation`]: error metrics, cross-validation, closed-loop checks, search baselines, PCA, reports.
//! - [`cli`]: the `inverse-forge` command line.

pub mod cli;
pub mod datagen;
pub mod error;
pub mod evaluation;
pub mod inference;
pub mod models;
pub mod rng;
pub mod simulator;
pub mod tensor;
pub mod training;

pub use error::{Error, Result};

/// Version string recorded in report manifests.
pub const VERSION: &str = concat!("v", env!("CARGO_PKG_VERSION"));
