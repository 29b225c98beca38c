//! Conditional maximum-likelihood estimation for parameters that were
//! selected by thresholding the same data they are estimated from.
//!
//! The observation model is a normal variable `Y ~ N(theta, sigma^2)` that
//! is only reported when `|Y| >= c`. The estimators in this crate maximize
//! the likelihood of that truncated distribution rather than of `Y`, which
//! removes most of the upward bias picked up by selection. Correlations are
//! handled on the Fisher-z scale, where they are approximately normal with
//! variance `1 / (n - 3)`.
//!
//! Modules:
//!
//! * [`truncnorm`]: the two-sided truncated normal family and its MLE.
//! * [`correlation`]: Fisher transform, conditional correlation estimates,
//!   and conditional (CQC) confidence intervals.
//! * [`selection`]: fixed, Bonferroni and Benjamini-Hochberg selection rules.
//! * [`simfields`]: synthetic lattices (Gaussian random fields, mixture
//!   signals, fMRI-like volumes) and dependent p-value streams.
//!
//! The crate is `no_std` and only needs `alloc`.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod correlation;
mod error;
pub mod rng;
pub mod selection;
pub mod simfields;
pub mod special;
pub mod truncnorm;

pub use correlation::{
    conditional_correlation_estimate, cqc_interval, fisher_transform, inverse_fisher, CorrelationObservation,
    SelectiveEstimate,
};
pub use error::{Error, Result};
pub use selection::{SelectionResult, SelectionRule};
pub use simfields::Lattice3D;
pub use truncnorm::{conditional_mle, ConditionalModel, SolverConfig};
