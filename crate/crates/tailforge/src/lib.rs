//! Heavy-tailed representation learning toolkit.
//!
//! The crate trains an adversarial encoder whose latent distribution matches a
//! heavy-tailed multivariate logistic target, together with a pair of
//! classifiers dedicated to the extreme and bulk regions of the latent space.
//! On top of that it provides tail-region data augmentation by decoding scaled
//! latent codes, and a set of statistical diagnostics (angle/radius
//! independence tests, scale-invariance barcodes, nested tail-loss curves).
//!
//! Module map:
//! - [`rng`]: seeded, splittable random streams (all randomness flows from one seed)
//! - [`heavy_tails`]: positive-stable and multivariate logistic sampling
//! - [`evt`]: angular projection, rank transform, tail thresholds, angle-only classifiers
//! - [`nn`]: minimal dense networks with exact gradients and plain SGD
//! - [`lhtr`]: the adversarial two-head training procedure
//! - [`augment`]: latent-to-sequence decoder and scaled generation
//! - [`diagnostics`]: correlation/KS/permutation tests, barcodes, reports
//! - [`data_io`]: synthetic dataset generators and embedding file I/O
//! - [`experiments`]: end-to-end experiment orchestration

pub mod augment;
pub mod data_io;
pub mod diagnostics;
pub mod error;
pub mod evt;
pub mod experiments;
pub mod heavy_tails;
pub mod lhtr;
pub mod nn;
pub mod rng;

pub use error::{Error, Result};

/// Crate version, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
