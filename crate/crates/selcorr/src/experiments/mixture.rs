//! Mixture signal plus smooth noise, selected by Benjamini-Hochberg.

use serde::{Deserialize, Serialize};

use selcorr_core::correlation::{fisher_sd, inverse_fisher};
use selcorr_core::rng::derive_seed;
use selcorr_core::selection::{select_pvalues, SelectionRule};
use selcorr_core::simfields::{generate_grf, generate_mixture_signal, Dims, GrfConfig, MixtureSignalConfig};
use selcorr_core::special::two_sided_p;
use selcorr_core::truncnorm::{conditional_mle, SolverConfig};

use super::{
    aggregate, check_estimators, check_replications, check_rhos, check_sample_sizes, default_rho_grid, replicate,
    split_sizes, Estimator, MetricsRow, RepErrors, Scenario, Scope,
};
use crate::error::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MixtureStudyConfig {
    /// Correlation of the non-null voxels.
    pub rhos: Vec<f64>,
    pub sample_sizes: Vec<u32>,
    pub dims: Dims,
    pub propensity: f64,
    /// BH level.
    pub alpha: f64,
    pub noise_kernel_sd_voxels: f64,
    pub signal_smoothing_sd_voxels: f64,
    pub estimators: Vec<Estimator>,
    pub replications: usize,
    pub master_seed: u64,
}

impl Default for MixtureStudyConfig {
    fn default() -> Self {
        MixtureStudyConfig {
            rhos: default_rho_grid(),
            sample_sizes: vec![8, 16, 32],
            dims: [10, 10, 10],
            propensity: 0.2,
            alpha: 0.1,
            noise_kernel_sd_voxels: 1.5,
            signal_smoothing_sd_voxels: 0.0,
            estimators: Estimator::ALL.to_vec(),
            replications: 200,
            master_seed: 0,
        }
    }
}

impl MixtureStudyConfig {
    pub fn validate(&self) -> Result<()> {
        check_rhos(&self.rhos)?;
        check_sample_sizes(&self.sample_sizes, self.estimators.contains(&Estimator::Split))?;
        check_estimators(&self.estimators)?;
        check_replications(self.replications)?;
        SelectionRule::BenjaminiHochberg(self.alpha).validate()?;
        MixtureSignalConfig::from_correlation(self.propensity, self.rhos[0], self.signal_smoothing_sd_voxels)?;
        GrfConfig {
            dims: self.dims,
            kernel_sd_voxels: self.noise_kernel_sd_voxels,
            target_variance: 1.0,
        }
        .validate()?;
        Ok(())
    }
}

/// Observed field `z = signal + noise` and its BH selection.
struct Selected {
    z: Vec<f64>,
    sigma: f64,
    selected: Vec<usize>,
    threshold_z: f64,
}

fn observe_and_select(cfg: &MixtureStudyConfig, signal: &[f64], n: u32, seed: u64) -> Result<Selected> {
    let sigma = fisher_sd(n)?;
    let noise = generate_grf(
        &GrfConfig {
            dims: cfg.dims,
            kernel_sd_voxels: cfg.noise_kernel_sd_voxels,
            target_variance: sigma * sigma,
        },
        seed,
    )?;
    let z: Vec<f64> = signal.iter().zip(noise.values()).map(|(s, e)| s + e).collect();
    let p: Vec<f64> = z.iter().map(|v| two_sided_p(v / sigma)).collect();
    let sel = select_pvalues(&p, SelectionRule::BenjaminiHochberg(cfg.alpha), None)?;
    Ok(Selected {
        z,
        sigma,
        selected: sel.selected,
        threshold_z: sel.threshold_z,
    })
}

fn rep_errors(
    sel: &Selected,
    truth: &[f64],
    mask: &[bool],
    estimate: impl Fn(usize) -> Result<f64>,
) -> Result<RepErrors> {
    let errors = sel
        .selected
        .iter()
        .map(|&i| Ok(estimate(i)? - truth[i]))
        .collect::<Result<Vec<f64>>>()?;
    let nonnull = mask.iter().filter(|&&b| b).count();
    let hits = sel.selected.iter().filter(|&&i| mask[i]).count();
    Ok(RepErrors {
        errors,
        n_selected: sel.selected.len(),
        power: if nonnull == 0 {
            0.0
        } else {
            hits as f64 / nonnull as f64
        },
    })
}

/// Conditional estimate for voxel `i`, conditioning on the realized BH
/// cutoff on the Fisher-z scale.
fn conditional_at(sel: &Selected, i: usize, solver: &SolverConfig) -> Result<f64> {
    let c = sel.threshold_z * sel.sigma;
    let z = sel.z[i];
    // BH admits p <= threshold, which can leave |z| an ulp under c.
    let y = if z.abs() < c { c.copysign(z) } else { z };
    Ok(inverse_fisher(conditional_mle(y, sel.sigma, c, solver)?))
}

fn simulate_rep(cfg: &MixtureStudyConfig, rho: f64, n: u32, seed: u64) -> Result<Vec<RepErrors>> {
    let signal_cfg = MixtureSignalConfig::from_correlation(cfg.propensity, rho, cfg.signal_smoothing_sd_voxels)?;
    let signal = generate_mixture_signal(&signal_cfg, cfg.dims, derive_seed(seed, 0, 0))?;
    let mask = signal.nonnull_mask().expect("mixture signal carries a mask");
    let truth: Vec<f64> = signal.values().iter().map(|&t| inverse_fisher(t)).collect();
    let solver = SolverConfig::default();

    let needs_full = cfg.estimators.iter().any(|&e| e != Estimator::Split);
    let full = if needs_full {
        Some(observe_and_select(cfg, signal.values(), n, derive_seed(seed, 1, 0))?)
    } else {
        None
    };
    let mut out = Vec::with_capacity(cfg.estimators.len());
    for &estimator in &cfg.estimators {
        let errors = match estimator {
            Estimator::Direct => {
                let sel = full.as_ref().expect("full sample observed");
                rep_errors(sel, &truth, mask, |i| Ok(inverse_fisher(sel.z[i])))?
            }
            Estimator::Conditional => {
                let sel = full.as_ref().expect("full sample observed");
                rep_errors(sel, &truth, mask, |i| conditional_at(sel, i, &solver))?
            }
            Estimator::Split => {
                let (n_a, n_b) = split_sizes(n);
                let a = observe_and_select(cfg, signal.values(), n_a, derive_seed(seed, 2, 0))?;
                let sigma_b = fisher_sd(n_b)?;
                let noise_b = generate_grf(
                    &GrfConfig {
                        dims: cfg.dims,
                        kernel_sd_voxels: cfg.noise_kernel_sd_voxels,
                        target_variance: sigma_b * sigma_b,
                    },
                    derive_seed(seed, 3, 0),
                )?;
                let z_b: Vec<f64> = signal
                    .values()
                    .iter()
                    .zip(noise_b.values())
                    .map(|(s, e)| s + e)
                    .collect();
                rep_errors(&a, &truth, mask, |i| Ok(inverse_fisher(z_b[i])))?
            }
        };
        out.push(errors);
    }
    Ok(out)
}

/// Metrics over `(rho_h1, n, estimator)` on the selected voxels.
///
/// Each replication draws a mixture signal, adds smooth noise of variance
/// `1 / (n - 3)` and applies BH to the two-sided Fisher-z p-values. The
/// split estimator selects on half A and estimates from an independent
/// half B. Per-replication bias, median bias and MSE are averaged over the
/// replications that selected anything, power over all of them, and the
/// quantiles pool the errors.
pub fn run_mixture_study(cfg: &MixtureStudyConfig) -> Result<Vec<MetricsRow>> {
    cfg.validate()?;
    let mut rows = Vec::new();
    for (i, &rho) in cfg.rhos.iter().enumerate() {
        for (j, &n) in cfg.sample_sizes.iter().enumerate() {
            let cell = (i * cfg.sample_sizes.len() + j) as u64;
            let reps = replicate(cfg.replications, |rep| {
                simulate_rep(cfg, rho, n, derive_seed(cfg.master_seed, cell, rep))
            })?;
            for (k, &estimator) in cfg.estimators.iter().enumerate() {
                let per_rep: Vec<&RepErrors> = reps.iter().map(|r| &r[k]).collect();
                rows.push(MetricsRow {
                    scenario: Scenario::MixtureGrf,
                    rho: Some(rho),
                    n,
                    estimator,
                    scope: Scope::Selected,
                    metrics: aggregate(&per_rep),
                });
            }
        }
    }
    Ok(rows)
}
