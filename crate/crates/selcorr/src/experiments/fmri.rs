//! fMRI-like volumes: per-dataset error distributions and error curves
//! against the observed correlation.

use serde::{Deserialize, Serialize};

use selcorr_core::correlation::{fisher_sd, inverse_fisher};
use selcorr_core::rng::derive_seed;
use selcorr_core::selection::{select_pvalues, SelectionRule};
use selcorr_core::simfields::{generate_fmri_like, Dims, FmriGenConfig, MixtureParams};
use selcorr_core::special::two_sided_p;
use selcorr_core::truncnorm::{conditional_mle, SolverConfig};

use super::{
    aggregate, check_replications, mean, quantile_sorted, Estimator, Metrics, MetricsRow, RepErrors, Scenario, Scope,
};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FmriStudyConfig {
    pub dims: Dims,
    pub weight_null: f64,
    pub sd_null: f64,
    /// Fisher-z mean of the non-null component.
    pub mean_alt: f64,
    pub sd_alt: f64,
    pub shrink_kernel_sd: f64,
    pub signal_smoothing_sd_voxels: f64,
    pub noise_kernel_sd_voxels: f64,
    pub n_subjects: u32,
    /// BH level.
    pub alpha: f64,
    pub datasets: usize,
    /// Width of the observed-correlation bins.
    pub bin_width: f64,
    pub master_seed: u64,
}

impl Default for FmriStudyConfig {
    fn default() -> Self {
        let g = FmriGenConfig::default();
        FmriStudyConfig {
            dims: g.dims,
            weight_null: g.mixture.weight_null,
            sd_null: g.mixture.sd_null,
            mean_alt: g.mixture.mean_alt,
            sd_alt: g.mixture.sd_alt,
            shrink_kernel_sd: g.shrink_kernel_sd,
            signal_smoothing_sd_voxels: g.signal_smoothing_sd_voxels,
            noise_kernel_sd_voxels: g.noise_kernel_sd_voxels,
            n_subjects: g.n_subjects,
            alpha: 0.1,
            datasets: 200,
            bin_width: 0.05,
            master_seed: 0,
        }
    }
}

impl FmriStudyConfig {
    pub fn generator(&self) -> FmriGenConfig {
        FmriGenConfig {
            dims: self.dims,
            mixture: MixtureParams {
                weight_null: self.weight_null,
                sd_null: self.sd_null,
                mean_alt: self.mean_alt,
                sd_alt: self.sd_alt,
            },
            shrink_kernel_sd: self.shrink_kernel_sd,
            signal_smoothing_sd_voxels: self.signal_smoothing_sd_voxels,
            noise_kernel_sd_voxels: self.noise_kernel_sd_voxels,
            n_subjects: self.n_subjects,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.generator().validate()?;
        SelectionRule::BenjaminiHochberg(self.alpha).validate()?;
        check_replications(self.datasets)?;
        if !(self.bin_width > 0.0 && self.bin_width <= 1.0) {
            return Err(Error::config("bin_width must lie in (0, 1]"));
        }
        Ok(())
    }
}

const ESTIMATORS: [Estimator; 2] = [Estimator::Direct, Estimator::Conditional];

/// Metrics of one dataset and estimator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DatasetRow {
    pub dataset: usize,
    pub estimator: Estimator,
    /// Realized BH cutoff on the r scale; NaN when nothing was selected.
    pub threshold_r: f64,
    pub metrics: Metrics,
}

/// Errors pooled over datasets within one observed-correlation bin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BinRow {
    pub estimator: Estimator,
    pub r_lo: f64,
    pub r_hi: f64,
    pub count: usize,
    pub bias: f64,
    pub mse: f64,
    pub bias_q05: f64,
    pub bias_q95: f64,
    pub mse_q05: f64,
    pub mse_q95: f64,
}

/// Modes of the per-dataset bias and MSE distributions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModeRow {
    pub estimator: Estimator,
    pub bias_mode: f64,
    pub mse_mode: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FmriStudy {
    /// Averages over datasets, one row per estimator.
    pub summary: Vec<MetricsRow>,
    pub datasets: Vec<DatasetRow>,
    pub by_observed: Vec<BinRow>,
    pub modes: Vec<ModeRow>,
}

struct DatasetResult {
    /// `(observed r, error)` per estimator, selected voxels only.
    entries: [Vec<(f64, f64)>; 2],
    reps: [RepErrors; 2],
    threshold_r: f64,
}

fn simulate_dataset(cfg: &FmriStudyConfig, seed: u64) -> Result<DatasetResult> {
    let (data, truth) = generate_fmri_like(&cfg.generator(), seed)?;
    let sigma = fisher_sd(cfg.n_subjects)?;
    let z = data.values();
    let p: Vec<f64> = z.iter().map(|v| two_sided_p(v / sigma)).collect();
    let sel = select_pvalues(&p, SelectionRule::BenjaminiHochberg(cfg.alpha), None)?;
    let mask = truth.nonnull_mask().expect("fMRI truth carries a mask");
    let nonnull = mask.iter().filter(|&&b| b).count();
    let hits = sel.selected.iter().filter(|&&i| mask[i]).count();
    let power = if nonnull == 0 {
        0.0
    } else {
        hits as f64 / nonnull as f64
    };

    let c = sel.threshold_z * sigma;
    let solver = SolverConfig::default();
    let mut entries: [Vec<(f64, f64)>; 2] = Default::default();
    for &i in &sel.selected {
        let rho = inverse_fisher(truth.values()[i]);
        let r = inverse_fisher(z[i]);
        let y = if z[i].abs() < c { c.copysign(z[i]) } else { z[i] };
        let conditional = inverse_fisher(conditional_mle(y, sigma, c, &solver)?);
        entries[0].push((r, r - rho));
        entries[1].push((r, conditional - rho));
    }
    let reps = [0, 1].map(|k| RepErrors {
        errors: entries[k].iter().map(|e| e.1).collect(),
        n_selected: sel.selected.len(),
        power,
    });
    let threshold_r = if sel.is_empty() { f64::NAN } else { inverse_fisher(c) };
    Ok(DatasetResult {
        entries,
        reps,
        threshold_r,
    })
}

/// Location of the highest point of a Gaussian kernel density estimate
/// (Silverman bandwidth, 512-point grid). NaN for fewer than two values.
pub(crate) fn kde_mode(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return values.first().copied().unwrap_or(f64::NAN);
    }
    let mut sorted = values.to_vec();
    sorted.sort_unstable_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let m = mean(&sorted);
    let sd = (sorted.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1.0)).sqrt();
    let iqr = quantile_sorted(&sorted, 0.75) - quantile_sorted(&sorted, 0.25);
    let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
    if !(spread > 0.0) {
        return sorted[0];
    }
    let h = 0.9 * spread * n.powf(-0.2);
    let lo = sorted[0] - 3.0 * h;
    let hi = sorted[sorted.len() - 1] + 3.0 * h;
    let grid = 512;
    let mut best = (f64::NEG_INFINITY, lo);
    for k in 0..grid {
        let x = lo + (hi - lo) * k as f64 / (grid - 1) as f64;
        let d: f64 = sorted.iter().map(|v| (-0.5 * ((x - v) / h).powi(2)).exp()).sum();
        if d > best.0 {
            best = (d, x);
        }
    }
    best.1
}

fn bin_rows(estimator: Estimator, entries: &[(f64, f64)], width: f64) -> Vec<BinRow> {
    let mut bins: std::collections::BTreeMap<i64, Vec<f64>> = Default::default();
    for &(r, e) in entries {
        bins.entry((r / width).floor() as i64).or_default().push(e);
    }
    bins.into_iter()
        .map(|(k, mut errors)| {
            errors.sort_unstable_by(f64::total_cmp);
            let mut squares: Vec<f64> = errors.iter().map(|e| e * e).collect();
            squares.sort_unstable_by(f64::total_cmp);
            BinRow {
                estimator,
                r_lo: k as f64 * width,
                r_hi: (k + 1) as f64 * width,
                count: errors.len(),
                bias: mean(&errors),
                mse: mean(&squares),
                bias_q05: quantile_sorted(&errors, 0.05),
                bias_q95: quantile_sorted(&errors, 0.95),
                mse_q05: quantile_sorted(&squares, 0.05),
                mse_q95: quantile_sorted(&squares, 0.95),
            }
        })
        .collect()
}

/// Direct and conditional estimates on BH-selected voxels of independently
/// generated fMRI-like datasets.
///
/// Returns per-dataset metrics, their averages, the modes of the
/// per-dataset bias and MSE, and errors binned by the observed (signed)
/// correlation with 5% and 95% percentile bands.
pub fn run_fmri_study(cfg: &FmriStudyConfig) -> Result<FmriStudy> {
    cfg.validate()?;
    let results = super::replicate(cfg.datasets, |d| {
        simulate_dataset(cfg, derive_seed(cfg.master_seed, 0, d))
    })?;

    let mut study = FmriStudy {
        summary: Vec::new(),
        datasets: Vec::new(),
        by_observed: Vec::new(),
        modes: Vec::new(),
    };
    for (d, res) in results.iter().enumerate() {
        for (k, &estimator) in ESTIMATORS.iter().enumerate() {
            let rep = &res.reps[k];
            study.datasets.push(DatasetRow {
                dataset: d,
                estimator,
                threshold_r: res.threshold_r,
                metrics: Metrics::from_errors(&rep.errors, rep.n_selected, rep.power),
            });
        }
    }
    for (k, &estimator) in ESTIMATORS.iter().enumerate() {
        let reps: Vec<&RepErrors> = results.iter().map(|r| &r.reps[k]).collect();
        study.summary.push(MetricsRow {
            scenario: Scenario::FmriLike,
            rho: None,
            n: cfg.n_subjects,
            estimator,
            scope: Scope::Selected,
            metrics: aggregate(&reps),
        });
        let defined: Vec<&Metrics> = study
            .datasets
            .iter()
            .filter(|r| r.estimator == estimator && !r.metrics.undefined)
            .map(|r| &r.metrics)
            .collect();
        study.modes.push(ModeRow {
            estimator,
            bias_mode: kde_mode(&defined.iter().map(|m| m.bias).collect::<Vec<_>>()),
            mse_mode: kde_mode(&defined.iter().map(|m| m.mse).collect::<Vec<_>>()),
        });
        let pooled: Vec<(f64, f64)> = results.iter().flat_map(|r| r.entries[k].iter().copied()).collect();
        study.by_observed.extend(bin_rows(estimator, &pooled, cfg.bin_width));
    }
    Ok(study)
}
