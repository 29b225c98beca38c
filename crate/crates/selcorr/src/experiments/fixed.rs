//! Independent correlations selected by a fixed threshold.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use selcorr_core::correlation::{fisher_sd, fisher_transform, inverse_fisher};
use selcorr_core::rng::{derive_seed, seeded};
use selcorr_core::truncnorm::{conditional_mle, SolverConfig};

use super::{
    check_estimators, check_replications, check_rhos, check_sample_sizes, default_rho_grid, replicate, split_sizes,
    Estimator, Metrics, MetricsRow, Scenario, Scope,
};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FixedThresholdConfig {
    pub rhos: Vec<f64>,
    pub sample_sizes: Vec<u32>,
    pub threshold_r: f64,
    pub estimators: Vec<Estimator>,
    pub replications: usize,
    pub master_seed: u64,
}

impl Default for FixedThresholdConfig {
    fn default() -> Self {
        FixedThresholdConfig {
            rhos: default_rho_grid(),
            sample_sizes: vec![10, 25, 50, 100],
            threshold_r: 0.6,
            estimators: Estimator::ALL.to_vec(),
            replications: 10_000,
            master_seed: 0,
        }
    }
}

impl FixedThresholdConfig {
    pub fn validate(&self) -> Result<()> {
        check_rhos(&self.rhos)?;
        check_sample_sizes(&self.sample_sizes, self.estimators.contains(&Estimator::Split))?;
        check_estimators(&self.estimators)?;
        check_replications(self.replications)?;
        if !(self.threshold_r > 0.0 && self.threshold_r < 1.0) {
            return Err(Error::config("threshold_r must lie in (0, 1)"));
        }
        Ok(())
    }
}

/// Outcome of one 50-50 split replication.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitDraw {
    pub selected: bool,
    /// Correlation estimate from the held-out half, when selected.
    pub estimate: Option<f64>,
}

/// Selects on one half of the sample and estimates on the other.
///
/// The halves are independent Fisher-z draws around `theta_true` with
/// variances `1 / (n_a - 3)` and `1 / (n_b - 3)`. Odd `n` gives the extra
/// subject to the selection half.
pub fn split_half_estimate(theta_true: f64, n: u32, threshold_r: f64, seed: u64) -> Result<SplitDraw> {
    let (n_a, n_b) = split_sizes(n);
    if n_b <= 3 {
        return Err(selcorr_core::Error::Domain {
            name: "n",
            value: n as f64,
            reason: "each half of the sample needs more than 3 subjects",
        }
        .into());
    }
    let c = fisher_transform(threshold_r)?;
    let mut rng = seeded(seed);
    let z_a = theta_true + fisher_sd(n_a)? * rng.sample::<f64, _>(StandardNormal);
    let z_b = theta_true + fisher_sd(n_b)? * rng.sample::<f64, _>(StandardNormal);
    let selected = z_a.abs() >= c;
    Ok(SplitDraw {
        selected,
        estimate: selected.then(|| inverse_fisher(z_b)),
    })
}

struct Replicate {
    r: f64,
    conditional: Option<f64>,
    split: Option<SplitDraw>,
}

fn simulate_cell(cfg: &FixedThresholdConfig, rho: f64, n: u32, cell: u64) -> Result<Vec<Replicate>> {
    let theta = fisher_transform(rho)?;
    let sigma = fisher_sd(n)?;
    let c = fisher_transform(cfg.threshold_r)?;
    let solver = SolverConfig::default();
    let with_split = cfg.estimators.contains(&Estimator::Split);
    replicate(cfg.replications, |rep| {
        let seed = derive_seed(cfg.master_seed, cell, rep);
        let z = theta + sigma * seeded(seed).sample::<f64, _>(StandardNormal);
        let conditional = if z.abs() >= c {
            Some(inverse_fisher(conditional_mle(z, sigma, c, &solver)?))
        } else {
            None
        };
        let split = if with_split {
            Some(split_half_estimate(theta, n, cfg.threshold_r, derive_seed(seed, 1, 0))?)
        } else {
            None
        };
        Ok(Replicate {
            r: inverse_fisher(z),
            conditional,
            split,
        })
    })
}

fn summarize(reps: &[Replicate], rho: f64, estimator: Estimator, scope: Scope) -> Metrics {
    // (selected, estimate when selected or in the entire scope)
    let entries: Vec<(bool, f64)> = reps
        .iter()
        .map(|r| match estimator {
            Estimator::Direct => (r.conditional.is_some(), r.r),
            Estimator::Conditional => (r.conditional.is_some(), r.conditional.unwrap_or(0.0)),
            Estimator::Split => {
                let s = r.split.expect("split draws are simulated when requested");
                (s.selected, s.estimate.unwrap_or(0.0))
            }
        })
        .collect();
    let n_selected = entries.iter().filter(|e| e.0).count();
    let power = n_selected as f64 / entries.len() as f64;
    let errors: Vec<f64> = entries
        .iter()
        .filter(|e| scope == Scope::Entire || e.0)
        .map(|e| e.1 - rho)
        .collect();
    Metrics::from_errors(&errors, n_selected, power)
}

/// Metrics over `(rho, n, estimator, scope)` for single Fisher-z
/// observations selected by `|r| >= threshold_r`.
///
/// In the entire-sample scope the direct estimator is scored on every
/// replication with its raw value, while the conditional and split
/// estimators score 0 when their selection fails.
pub fn run_fixed_threshold_study(cfg: &FixedThresholdConfig) -> Result<Vec<MetricsRow>> {
    cfg.validate()?;
    let mut rows = Vec::new();
    for (i, &rho) in cfg.rhos.iter().enumerate() {
        for (j, &n) in cfg.sample_sizes.iter().enumerate() {
            let cell = (i * cfg.sample_sizes.len() + j) as u64;
            let reps = simulate_cell(cfg, rho, n, cell)?;
            for &estimator in &cfg.estimators {
                for scope in [Scope::Entire, Scope::Selected] {
                    rows.push(MetricsRow {
                        scenario: Scenario::FixedThreshold,
                        rho: Some(rho),
                        n,
                        estimator,
                        scope,
                        metrics: summarize(&reps, rho, estimator, scope),
                    });
                }
            }
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_rejects_tiny_halves() {
        assert!(split_half_estimate(0.3, 7, 0.6, 1).is_err());
        assert!(split_half_estimate(0.3, 8, 0.6, 1).is_ok());
    }

    #[test]
    fn split_is_deterministic() {
        let a = split_half_estimate(0.5, 20, 0.3, 99).unwrap();
        assert_eq!(a, split_half_estimate(0.5, 20, 0.3, 99).unwrap());
        assert_eq!(a.selected, a.estimate.is_some());
    }

    #[test]
    fn small_study_has_expected_shape() {
        let cfg = FixedThresholdConfig {
            rhos: vec![0.3, 0.7],
            sample_sizes: vec![10, 20],
            replications: 50,
            ..FixedThresholdConfig::default()
        };
        let rows = run_fixed_threshold_study(&cfg).unwrap();
        assert_eq!(rows.len(), 2 * 2 * 3 * 2);
        for row in &rows {
            let m = row.metrics;
            if row.scope == Scope::Entire {
                assert!(!m.undefined);
            }
            assert!((0.0..=1.0).contains(&m.power));
            assert!(m.undefined || m.mse >= 0.0);
        }
    }

    #[test]
    fn invalid_config_is_rejected() {
        let bad = FixedThresholdConfig {
            sample_sizes: vec![6],
            ..FixedThresholdConfig::default()
        };
        assert!(bad.validate().is_err());
        let ok = FixedThresholdConfig {
            sample_sizes: vec![6],
            estimators: vec![Estimator::Direct, Estimator::Conditional],
            ..FixedThresholdConfig::default()
        };
        assert!(ok.validate().is_ok());
        let zero = FixedThresholdConfig {
            replications: 0,
            ..FixedThresholdConfig::default()
        };
        assert!(zero.validate().is_err());
    }
}
