//! Distributions of test error over the version space of interpolating
//! linear and random-feature classifiers.
//!
//! Interpolating weight vectors are drawn from a standard Gaussian restricted
//! to the cone `{w : y_i wᵀφ(x_i) >= 0}` with rejection-free elliptical slice
//! sampling ([`sampler`]); their test errors are summarized as CDFs
//! ([`estimator`]). The [`equicorr`] module evaluates the equicorrelated
//! model's orthant probabilities, limit CDF and critical value against
//! quadrature and Monte Carlo oracles.

#![allow(clippy::excessive_precision, clippy::neg_cmp_op_on_partial_ord)]

pub mod data;
pub mod equicorr;
pub mod error;
pub mod estimator;
pub mod features;
pub mod quadrature;
pub mod sampler;
pub mod special;
pub mod stats;

pub use data::{LabeledDataset, Standardization};
pub use equicorr::EquicorrModel;
pub use error::{Error, Result};
pub use estimator::{ErrorCdf, GaussianMixtureSpec};
pub use features::FeatureMap;
pub use sampler::{ChainConfig, ConstraintSet, WeightChain};
