//! Spread of the realized BH threshold as the number of tests grows.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use selcorr_core::rng::{derive_seed, seeded};
use selcorr_core::selection::bh_select;
use selcorr_core::simfields::{generate_grf, generate_hmm_pvalues, near_cubic_dims, GrfConfig, HmmConfig};
use selcorr_core::special::two_sided_p;

use super::{check_replications, mean, sd};
use crate::error::{Error, Result};

/// Source of p-values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PGenerator {
    /// Independent z-scores, non-null with probability `propensity`.
    Independent,
    /// Smooth Gaussian noise on a near-cubic lattice plus the same signal.
    Grf,
    /// Three-state normal hidden Markov chain.
    Hmm,
    /// Independent, with propensity `propensity * sqrt(100 / m)`.
    Vanishing,
}

impl PGenerator {
    pub const ALL: [PGenerator; 4] = [
        PGenerator::Independent,
        PGenerator::Grf,
        PGenerator::Hmm,
        PGenerator::Vanishing,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PGenerator::Independent => "independent",
            PGenerator::Grf => "grf",
            PGenerator::Hmm => "hmm",
            PGenerator::Vanishing => "vanishing",
        }
    }
}

/// HMM settings in config files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HmmSection {
    pub transition: [[f64; 3]; 3],
    pub state_means: [f64; 3],
    pub state_sd: f64,
    pub initial_state: usize,
}

impl Default for HmmSection {
    fn default() -> Self {
        let h = HmmConfig::default();
        HmmSection {
            transition: h.transition,
            state_means: h.state_means,
            state_sd: h.state_sd,
            initial_state: h.initial_state,
        }
    }
}

impl HmmSection {
    fn to_core(&self) -> HmmConfig {
        HmmConfig {
            transition: self.transition,
            state_means: self.state_means,
            state_sd: self.state_sd,
            initial_state: self.initial_state,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BhStudyConfig {
    pub ms: Vec<usize>,
    pub generators: Vec<PGenerator>,
    pub alpha: f64,
    pub propensity: f64,
    /// Mean of non-null z-scores.
    pub alt_mean: f64,
    pub grf_kernel_sd_voxels: f64,
    pub hmm: HmmSection,
    pub replications: usize,
    pub master_seed: u64,
}

impl Default for BhStudyConfig {
    fn default() -> Self {
        BhStudyConfig {
            ms: vec![100, 1_000, 10_000, 100_000],
            generators: PGenerator::ALL.to_vec(),
            alpha: 0.1,
            propensity: 0.2,
            alt_mean: 3.0,
            grf_kernel_sd_voxels: 1.5,
            hmm: HmmSection::default(),
            replications: 100,
            master_seed: 0,
        }
    }
}

impl BhStudyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.ms.is_empty() || self.ms.contains(&0) {
            return Err(Error::config("ms must be a nonempty list of positive sizes"));
        }
        if self.generators.is_empty() {
            return Err(Error::config("generator list is empty"));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::config("alpha must lie in (0, 1)"));
        }
        if !(0.0..=1.0).contains(&self.propensity) {
            return Err(Error::config("propensity must lie in [0, 1]"));
        }
        if !self.alt_mean.is_finite() {
            return Err(Error::config("alt_mean must be finite"));
        }
        if !(self.grf_kernel_sd_voxels > 0.0) || !self.grf_kernel_sd_voxels.is_finite() {
            return Err(Error::config("grf_kernel_sd_voxels must be positive"));
        }
        self.hmm.to_core().validate()?;
        check_replications(self.replications)
    }
}

/// Threshold distribution for one `(generator, m)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThresholdRow {
    pub generator: PGenerator,
    pub m: usize,
    pub replications: usize,
    /// Replications where BH selected nothing; they carry no threshold.
    pub n_undefined: usize,
    pub threshold_mean: f64,
    pub threshold_sd: f64,
}

fn independent_pvalues(m: usize, propensity: f64, alt_mean: f64, seed: u64) -> Vec<f64> {
    let mut rng = seeded(seed);
    (0..m)
        .map(|_| {
            let shift = if rng.random::<f64>() < propensity {
                alt_mean
            } else {
                0.0
            };
            two_sided_p(shift + rng.sample::<f64, _>(StandardNormal))
        })
        .collect()
}

fn pvalues(cfg: &BhStudyConfig, generator: PGenerator, m: usize, seed: u64) -> Result<Vec<f64>> {
    Ok(match generator {
        PGenerator::Independent => independent_pvalues(m, cfg.propensity, cfg.alt_mean, seed),
        PGenerator::Vanishing => {
            let propensity = (cfg.propensity * (100.0 / m as f64).sqrt()).min(1.0);
            independent_pvalues(m, propensity, cfg.alt_mean, seed)
        }
        PGenerator::Grf => {
            let dims = near_cubic_dims(m);
            let noise = generate_grf(
                &GrfConfig {
                    dims,
                    kernel_sd_voxels: cfg.grf_kernel_sd_voxels,
                    target_variance: 1.0,
                },
                derive_seed(seed, 1, 0),
            )?;
            let mut rng = seeded(derive_seed(seed, 0, 0));
            noise
                .values()
                .iter()
                .map(|e| {
                    let shift = if rng.random::<f64>() < cfg.propensity {
                        cfg.alt_mean
                    } else {
                        0.0
                    };
                    two_sided_p(shift + e)
                })
                .collect()
        }
        PGenerator::Hmm => generate_hmm_pvalues(&cfg.hmm.to_core(), m, seed)?,
    })
}

/// Mean and standard deviation of the realized BH p-value threshold over
/// replications, for each generator and number of tests `m`.
pub fn run_bh_convergence_study(cfg: &BhStudyConfig) -> Result<Vec<ThresholdRow>> {
    cfg.validate()?;
    let mut rows = Vec::new();
    for (g, &generator) in cfg.generators.iter().enumerate() {
        for (j, &m) in cfg.ms.iter().enumerate() {
            let cell = (g * cfg.ms.len() + j) as u64;
            let thresholds = super::replicate(cfg.replications, |rep| {
                let p = pvalues(cfg, generator, m, derive_seed(cfg.master_seed, cell, rep))?;
                let sel = bh_select(&p, cfg.alpha)?;
                Ok((!sel.is_empty()).then_some(sel.threshold_p))
            })?;
            let defined: Vec<f64> = thresholds.iter().flatten().copied().collect();
            rows.push(ThresholdRow {
                generator,
                m,
                replications: cfg.replications,
                n_undefined: thresholds.len() - defined.len(),
                threshold_mean: mean(&defined),
                threshold_sd: sd(&defined),
            });
        }
    }
    Ok(rows)
}
