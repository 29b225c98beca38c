//! Seeded simulation studies.
//!
//! Every replication draws from its own seed, `derive_seed(master, cell,
//! replication)`, and results are collected in replication order before
//! aggregation, so tables are bit-identical for any thread count.

mod bh;
mod fixed;
mod fmri;
mod metrics;
mod mixture;

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use bh::{run_bh_convergence_study, BhStudyConfig, HmmSection, PGenerator, ThresholdRow};
pub use fixed::{run_fixed_threshold_study, split_half_estimate, FixedThresholdConfig, SplitDraw};
pub use fmri::{run_fmri_study, BinRow, DatasetRow, FmriStudy, FmriStudyConfig, ModeRow};
pub use metrics::{compute_metrics, mean, quantile_sorted, sd, Metrics};
pub use mixture::{run_mixture_study, MixtureStudyConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Estimator {
    Direct,
    Conditional,
    #[serde(rename = "split5050")]
    Split,
}

impl Estimator {
    pub const ALL: [Estimator; 3] = [Estimator::Direct, Estimator::Conditional, Estimator::Split];

    pub fn name(self) -> &'static str {
        match self {
            Estimator::Direct => "direct",
            Estimator::Conditional => "conditional",
            Estimator::Split => "split5050",
        }
    }
}

impl fmt::Display for Estimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Which entries a metric is computed over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scope {
    /// Every replication; non-selected entries score 0 for the conditional
    /// and split estimators.
    Entire,
    Selected,
}

impl Scope {
    pub fn name(self) -> &'static str {
        match self {
            Scope::Entire => "entire",
            Scope::Selected => "selected",
        }
    }
}

impl fmt::Display for Scope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    FixedThreshold,
    MixtureGrf,
    FmriLike,
    BhConvergence,
}

impl Scenario {
    pub const ALL: [Scenario; 4] = [
        Scenario::FixedThreshold,
        Scenario::MixtureGrf,
        Scenario::FmriLike,
        Scenario::BhConvergence,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scenario::FixedThreshold => "fixed-threshold",
            Scenario::MixtureGrf => "mixture-grf",
            Scenario::FmriLike => "fmri-like",
            Scenario::BhConvergence => "bh-convergence",
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One line of a metrics table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsRow {
    pub scenario: Scenario,
    /// True correlation of the cell, when the study has one.
    pub rho: Option<f64>,
    pub n: u32,
    pub estimator: Estimator,
    pub scope: Scope,
    pub metrics: Metrics,
}

/// Runs `f` for every replication index in parallel and returns the results
/// in index order.
pub(crate) fn replicate<T, F>(count: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(u64) -> Result<T> + Sync + Send,
{
    (0..count as u64).into_par_iter().map(f).collect()
}

pub(crate) fn check_rhos(rhos: &[f64]) -> Result<()> {
    if rhos.is_empty() {
        return Err(Error::config("rho grid is empty"));
    }
    if let Some(r) = rhos.iter().find(|r| !(r.abs() < 1.0)) {
        return Err(Error::config(format!("rho {r} is outside (-1, 1)")));
    }
    Ok(())
}

pub(crate) fn check_sample_sizes(ns: &[u32], split: bool) -> Result<()> {
    if ns.is_empty() {
        return Err(Error::config("sample size grid is empty"));
    }
    let min = if split { 8 } else { 4 };
    if let Some(n) = ns.iter().find(|&&n| n < min) {
        return Err(Error::config(format!("sample size {n} is below {min}")));
    }
    Ok(())
}

pub(crate) fn check_replications(reps: usize) -> Result<()> {
    if reps == 0 {
        return Err(Error::config("replications must be at least 1"));
    }
    Ok(())
}

pub(crate) fn check_estimators(estimators: &[Estimator]) -> Result<()> {
    if estimators.is_empty() {
        return Err(Error::config("estimator set is empty"));
    }
    Ok(())
}

/// Sizes of the two halves of a sample of `n`; the first (selection) half
/// takes the extra subject when `n` is odd.
pub fn split_sizes(n: u32) -> (u32, u32) {
    (n.div_ceil(2), n / 2)
}

/// `0.05, 0.15, ..., 0.95`
pub(crate) fn default_rho_grid() -> Vec<f64> {
    (0..10).map(|i| 0.05 + 0.1 * i as f64).collect()
}

/// Per-replication errors for one estimator, before aggregation.
#[derive(Debug, Clone, Default)]
pub(crate) struct RepErrors {
    pub errors: Vec<f64>,
    pub n_selected: usize,
    pub power: f64,
}

/// Aggregates replications into one metrics row: bias,
/// median bias and MSE are averaged over replications that selected
/// something, power over all replications, and the error quantiles are
/// taken over the pooled errors. `n_selected` is the total over
/// replications.
pub(crate) fn aggregate(reps: &[&RepErrors]) -> Metrics {
    let defined: Vec<Metrics> = reps
        .iter()
        .filter(|r| !r.errors.is_empty())
        .map(|r| Metrics::from_errors(&r.errors, r.n_selected, r.power))
        .collect();
    let power = mean(&reps.iter().map(|r| r.power).collect::<Vec<_>>());
    let n_selected = reps.iter().map(|r| r.n_selected).sum();
    if defined.is_empty() {
        return Metrics::from_errors(&[], n_selected, power);
    }
    let mut pooled: Vec<f64> = reps.iter().flat_map(|r| r.errors.iter().copied()).collect();
    pooled.sort_unstable_by(f64::total_cmp);
    let avg = |f: fn(&Metrics) -> f64| mean(&defined.iter().map(f).collect::<Vec<_>>());
    Metrics {
        bias: avg(|m| m.bias),
        median_bias: avg(|m| m.median_bias),
        mse: avg(|m| m.mse),
        power,
        q05: quantile_sorted(&pooled, 0.05),
        q95: quantile_sorted(&pooled, 0.95),
        n_selected,
        undefined: false,
    }
}
