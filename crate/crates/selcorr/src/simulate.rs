//! Runs a named scenario and writes its tables and manifest.

use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::experiments::{
    run_bh_convergence_study, run_fixed_threshold_study, run_fmri_study, run_mixture_study, BhStudyConfig,
    FixedThresholdConfig, FmriStudyConfig, MixtureStudyConfig, Scenario,
};
use crate::io::{self, Manifest};

/// Directory searched for `<scenario>.json` when no config file is given.
pub const CONFIG_DIR_ENV: &str = "SELCORR_CONFIG_DIR";

#[derive(Debug, Clone, PartialEq)]
pub struct SimulateOptions {
    pub scenario: Scenario,
    pub config: Option<PathBuf>,
    pub seed: Option<u64>,
    pub replications: Option<usize>,
    /// Worker threads; `None` uses the global rayon pool.
    pub threads: Option<usize>,
    pub out_dir: PathBuf,
}

fn config_path(opts: &SimulateOptions) -> Option<PathBuf> {
    if let Some(p) = &opts.config {
        return Some(p.clone());
    }
    let dir = std::env::var_os(CONFIG_DIR_ENV)?;
    let p = Path::new(&dir).join(format!("{}.json", opts.scenario.name()));
    p.is_file().then_some(p)
}

fn load<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    let Some(path) = path else {
        return Ok(T::default());
    };
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::config(format!("{}: {e}", path.display())))
}

fn manifest<C: Serialize>(scenario: Scenario, seed: u64, cfg: &C, files: &[&str], notes: &[&str]) -> Result<Manifest> {
    Ok(Manifest {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        scenario: scenario.name().into(),
        seed,
        files: files.iter().map(|s| s.to_string()).collect(),
        notes: notes.iter().map(|s| s.to_string()).collect(),
        config: serde_json::to_value(cfg)?,
    })
}

const FISHER_NOTE: &str = "correlations are simulated on the Fisher-z scale as normal draws with variance 1/(n-3)";

/// Runs the scenario and writes its outputs into `out_dir`. Returns the
/// written paths. Output bytes depend only on the config and seed.
pub fn simulate(opts: &SimulateOptions) -> Result<Vec<PathBuf>> {
    match opts.threads {
        Some(t) => {
            if t == 0 {
                return Err(Error::config("threads must be at least 1"));
            }
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(t)
                .build()
                .map_err(|e| Error::config(e.to_string()))?;
            pool.install(|| run(opts))
        }
        None => run(opts),
    }
}

fn run(opts: &SimulateOptions) -> Result<Vec<PathBuf>> {
    let path = config_path(opts);
    let path = path.as_deref();
    let dir = &opts.out_dir;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    let mut put = |name: &str| {
        let p = dir.join(name);
        written.push(p.clone());
        p
    };
    match opts.scenario {
        Scenario::FixedThreshold => {
            let mut cfg: FixedThresholdConfig = load(path)?;
            cfg.master_seed = opts.seed.unwrap_or(cfg.master_seed);
            cfg.replications = opts.replications.unwrap_or(cfg.replications);
            let rows = run_fixed_threshold_study(&cfg)?;
            io::write_file(&put("metrics.csv"), &rows[..], |w, r| io::write_metrics_csv(w, r))?;
            let m = manifest(
                opts.scenario,
                cfg.master_seed,
                &cfg,
                &["metrics.csv"],
                &[
                    FISHER_NOTE,
                    "threshold_r = 0.6 is an assumed value for the median-bias comparison; it is reused from the risk comparison",
                    "entire scope: conditional and split estimates of non-selected replications are scored as 0",
                ],
            )?;
            io::write_json(&put("manifest.json"), &m)?;
        }
        Scenario::MixtureGrf => {
            let mut cfg: MixtureStudyConfig = load(path)?;
            cfg.master_seed = opts.seed.unwrap_or(cfg.master_seed);
            cfg.replications = opts.replications.unwrap_or(cfg.replications);
            let rows = run_mixture_study(&cfg)?;
            io::write_file(&put("metrics.csv"), &rows[..], |w, r| io::write_metrics_csv(w, r))?;
            let m = manifest(
                opts.scenario,
                cfg.master_seed,
                &cfg,
                &["metrics.csv"],
                &[
                    FISHER_NOTE,
                    "bias, median_bias and mse average per-replication values over replications with a nonempty selection",
                    "power averages over all replications; q05 and q95 pool the errors of all replications",
                    "n_selected is the total over replications",
                    "split5050 selects on half A and estimates on an independent half B",
                ],
            )?;
            io::write_json(&put("manifest.json"), &m)?;
        }
        Scenario::FmriLike => {
            let mut cfg: FmriStudyConfig = load(path)?;
            cfg.master_seed = opts.seed.unwrap_or(cfg.master_seed);
            cfg.datasets = opts.replications.unwrap_or(cfg.datasets);
            let study = run_fmri_study(&cfg)?;
            io::write_file(&put("metrics.csv"), &study.summary[..], |w, r| {
                io::write_metrics_csv(w, r)
            })?;
            io::write_file(&put("datasets.csv"), &study.datasets[..], |w, r| {
                io::write_datasets_csv(w, r)
            })?;
            io::write_file(&put("by_observed.csv"), &study.by_observed[..], |w, r| {
                io::write_bins_csv(w, r)
            })?;
            io::write_file(&put("modes.csv"), &study.modes[..], |w, r| io::write_modes_csv(w, r))?;
            let seed0 = selcorr_core::rng::derive_seed(cfg.master_seed, 0, 0);
            let (data, truth) = selcorr_core::simfields::generate_fmri_like(&cfg.generator(), seed0)?;
            let echo = serde_json::to_value(&cfg)?;
            io::write_lattice(dir, "dataset0_data", &data, seed0, echo.clone())?;
            io::write_lattice(dir, "dataset0_truth", &truth, seed0, echo)?;
            for f in [
                "dataset0_data.csv",
                "dataset0_data.json",
                "dataset0_truth.csv",
                "dataset0_truth.json",
            ] {
                put(f);
            }
            let m = manifest(
                opts.scenario,
                cfg.master_seed,
                &cfg,
                &[
                    "metrics.csv",
                    "datasets.csv",
                    "by_observed.csv",
                    "modes.csv",
                    "dataset0_data.csv",
                    "dataset0_truth.csv",
                ],
                &[
                    "the signal is synthetic; mixture parameters are configuration values, not fitted to real data",
                    "by_observed bins are signed observed-r bins of width bin_width; bands are 5% and 95% quantiles of per-voxel errors",
                    "modes are the peaks of Gaussian kernel density estimates over per-dataset values",
                ],
            )?;
            io::write_json(&put("manifest.json"), &m)?;
        }
        Scenario::BhConvergence => {
            let mut cfg: BhStudyConfig = load(path)?;
            cfg.master_seed = opts.seed.unwrap_or(cfg.master_seed);
            cfg.replications = opts.replications.unwrap_or(cfg.replications);
            let rows = run_bh_convergence_study(&cfg)?;
            io::write_file(&put("bh_thresholds.csv"), &rows[..], |w, r| {
                io::write_thresholds_csv(w, r)
            })?;
            let m = manifest(
                opts.scenario,
                cfg.master_seed,
                &cfg,
                &["bh_thresholds.csv"],
                &["threshold statistics use only replications where BH selected something; n_undefined counts the rest"],
            )?;
            io::write_json(&put("manifest.json"), &m)?;
        }
    }
    Ok(written)
}
