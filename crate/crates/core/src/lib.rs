//! Empirical-Bayes smoothed classification.
//!
//! Randomized-smoothing certification where the base classifier is evaluated
//! at the Bayes estimate `x̂(y) = y − σ²∇φ(y)` of the clean input. The crate
//! bundles closed-form data models, a learnable energy network, adversarial
//! training of the smoothed soft classifier, walk-jump sampling, and the
//! experiment harness behind the `ebsmooth` CLI.
//!
//! Parallel loops go through [`par`]; with the default `parallel` feature they
//! run on rayon, otherwise sequentially. Results are identical either way.

// `!(x > 0.0)` is used deliberately so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod adversarial;
pub mod certify;
pub mod classifier;
pub mod densities;
pub mod energy;
mod error;
pub mod harness;
pub mod linalg;
pub mod mlp;
pub mod par;
pub mod sampler;
pub mod score;
pub mod stats;

pub use error::{Error, Result};

/// A point in `ℝ^d`: data sample, noise sample or perturbation.
pub type Point = Vec<f64>;
