//! Stochastic model predictive control for cycle-to-cycle HCCI combustion.
//!
//! The crate is split along the pipeline:
//!
//! - [`engine`]: surrogate plant, ground-truth residual process, normalization,
//!   dataset generation and reference profiles.
//! - [`genmodel`]: the conditional residual generator (Wasserstein
//!   autoencoder with an MMD prior penalty) and kernel statistics.
//! - [`pce`]: Hermite polynomial chaos, regularized collocation projection and
//!   moment extraction.
//! - [`smpc`]: scenario propagation, Cantelli tightening, quadratic and MMD
//!   objectives, the penalty solver and the four controller variants.
//! - [`harness`]: closed-loop Monte Carlo study, metrics and file output.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod engine;
pub mod error;
pub mod genmodel;
pub mod harness;
pub mod pce;
pub mod rng;
pub mod smpc;

pub use error::{Error, Result};
