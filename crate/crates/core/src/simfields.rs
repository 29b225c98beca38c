//! Synthetic data on 3-D voxel lattices.
//!
//! All values live on the Fisher-z scale. Every generator is a pure function
//! of its configuration and a `u64` seed.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::correlation::fisher_transform;
use crate::error::{Error, Result};
use crate::rng::{derive_seed, seeded, SimRng};
use crate::special;

pub type Dims = [usize; 3];

/// Values on an `nx * ny * nz` grid, x varying fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct Lattice3D {
    dims: Dims,
    values: Vec<f64>,
    nonnull_mask: Option<Vec<bool>>,
}

fn check_dims(dims: Dims) -> Result<usize> {
    if dims.contains(&0) {
        return Err(Error::Config("lattice dimensions must be positive"));
    }
    dims.iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or(Error::Config("lattice is too large"))
}

impl Lattice3D {
    pub fn new(dims: Dims, values: Vec<f64>) -> Result<Self> {
        if check_dims(dims)? != values.len() {
            return Err(Error::Config("value count does not match lattice dimensions"));
        }
        Ok(Lattice3D {
            dims,
            values,
            nonnull_mask: None,
        })
    }

    pub fn zeros(dims: Dims) -> Result<Self> {
        let len = check_dims(dims)?;
        Lattice3D::new(dims, vec![0.0; len])
    }

    pub fn with_mask(mut self, mask: Vec<bool>) -> Result<Self> {
        if mask.len() != self.values.len() {
            return Err(Error::Config("mask length does not match lattice"));
        }
        self.nonnull_mask = Some(mask);
        Ok(self)
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn nonnull_mask(&self) -> Option<&[bool]> {
        self.nonnull_mask.as_deref()
    }

    pub fn into_parts(self) -> (Dims, Vec<f64>, Option<Vec<bool>>) {
        (self.dims, self.values, self.nonnull_mask)
    }

    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.dims[0] * (y + self.dims[1] * z)
    }

    pub fn coords(&self, i: usize) -> (usize, usize, usize) {
        let [nx, ny, _] = self.dims;
        (i % nx, (i / nx) % ny, i / (nx * ny))
    }

    pub fn get(&self, x: usize, y: usize, z: usize) -> f64 {
        self.values[self.index(x, y, z)]
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    /// In-place separable Gaussian smoothing; see [`gaussian_smooth`].
    pub fn smooth(&mut self, sd_voxels: f64) -> Result<()> {
        gaussian_smooth(&mut self.values, self.dims, sd_voxels)
    }
}

/// Three near-equal factors of `m`, largest first; `(m, 1, 1)` when `m` has
/// no better factorization.
pub fn near_cubic_dims(m: usize) -> Dims {
    let mut best = [m.max(1), 1, 1];
    let mut best_spread = best[0];
    let mut a = 1;
    while a * a * a <= m {
        if m.is_multiple_of(a) {
            let rest = m / a;
            let mut b = a;
            while b * b <= rest {
                if rest.is_multiple_of(b) {
                    let c = rest / b;
                    if c - a < best_spread {
                        best = [c, b, a];
                        best_spread = c - a;
                    }
                }
                b += 1;
            }
        }
        a += 1;
    }
    best
}

/// Normalized Gaussian weights on `-radius..=radius`.
fn gaussian_kernel(sd: f64) -> Vec<f64> {
    let radius = libm::ceil(4.0 * sd).max(1.0) as usize;
    let mut w: Vec<f64> = (0..=2 * radius)
        .map(|i| {
            let k = i as f64 - radius as f64;
            libm::exp(-0.5 * k * k / (sd * sd))
        })
        .collect();
    let total: f64 = w.iter().sum();
    for v in &mut w {
        *v /= total;
    }
    w
}

/// Half-sample symmetric reflection of index `e` into `0..n`, with period `2n`.
#[inline]
fn reflect(e: isize, n: usize) -> usize {
    let period = 2 * n as isize;
    let e = e.rem_euclid(period) as usize;
    if e < n {
        e
    } else {
        2 * n - 1 - e
    }
}

fn smooth_axis(values: &mut [f64], dims: Dims, axis: usize, kernel: &[f64], line: &mut Vec<f64>) {
    let n = dims[axis];
    if n == 1 {
        return;
    }
    let stride = match axis {
        0 => 1,
        1 => dims[0],
        _ => dims[0] * dims[1],
    };
    let radius = (kernel.len() / 2) as isize;
    let total = values.len();
    line.resize(n, 0.0);
    for start in 0..total {
        // Visit each line once, from its first element.
        if (start / stride) % n != 0 {
            continue;
        }
        for (i, slot) in line.iter_mut().enumerate() {
            *slot = values[start + i * stride];
        }
        for i in 0..n {
            let mut acc = 0.0;
            for (k, &w) in kernel.iter().enumerate() {
                let e = i as isize + k as isize - radius;
                acc += w * line[reflect(e, n)];
            }
            values[start + i * stride] = acc;
        }
    }
}

/// Separable 3-D Gaussian smoothing with kernel standard deviation
/// `sd_voxels`, truncated at four standard deviations, with reflective
/// boundaries. The lattice mean is preserved. `sd_voxels == 0` is a no-op.
pub fn gaussian_smooth(values: &mut [f64], dims: Dims, sd_voxels: f64) -> Result<()> {
    if check_dims(dims)? != values.len() {
        return Err(Error::Config("value count does not match lattice dimensions"));
    }
    if !(sd_voxels >= 0.0) || !sd_voxels.is_finite() {
        return Err(Error::Config("smoothing sd must be nonnegative and finite"));
    }
    if sd_voxels == 0.0 {
        return Ok(());
    }
    let kernel = gaussian_kernel(sd_voxels);
    let mut line = Vec::new();
    for axis in 0..3 {
        smooth_axis(values, dims, axis, &kernel, &mut line);
    }
    Ok(())
}

/// Per-position variance of the 1-D smoothing operator applied to unit white
/// noise: the squared norm of each row after folding reflected weights.
fn axis_variance(n: usize, kernel: &[f64]) -> Vec<f64> {
    let radius = (kernel.len() / 2) as isize;
    let mut folded = vec![0.0; n];
    (0..n)
        .map(|i| {
            folded.iter_mut().for_each(|v| *v = 0.0);
            for (k, &w) in kernel.iter().enumerate() {
                folded[reflect(i as isize + k as isize - radius, n)] += w;
            }
            folded.iter().map(|v| v * v).sum()
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GrfConfig {
    pub dims: Dims,
    pub kernel_sd_voxels: f64,
    /// Marginal variance after smoothing, typically `1 / (n - 3)`.
    pub target_variance: f64,
}

impl GrfConfig {
    pub fn validate(&self) -> Result<()> {
        check_dims(self.dims)?;
        if !(self.kernel_sd_voxels > 0.0) || !self.kernel_sd_voxels.is_finite() {
            return Err(Error::Config("kernel_sd_voxels must be positive"));
        }
        if !(self.target_variance > 0.0) || !self.target_variance.is_finite() {
            return Err(Error::Config("target_variance must be positive"));
        }
        Ok(())
    }
}

fn white_noise(rng: &mut SimRng, len: usize) -> Vec<f64> {
    (0..len).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

/// Smooth stationary Gaussian noise.
///
/// White noise is smoothed with [`gaussian_smooth`] and every voxel is then
/// divided by the analytic standard deviation of the smoothing operator at
/// its position, so each voxel has marginal variance exactly
/// `target_variance`, boundary voxels included.
pub fn generate_grf(cfg: &GrfConfig, seed: u64) -> Result<Lattice3D> {
    cfg.validate()?;
    let dims = cfg.dims;
    let len = check_dims(dims)?;
    let mut rng = seeded(seed);
    let mut values = white_noise(&mut rng, len);
    let kernel = gaussian_kernel(cfg.kernel_sd_voxels);
    let mut line = Vec::new();
    for axis in 0..3 {
        smooth_axis(&mut values, dims, axis, &kernel, &mut line);
    }
    let var: [Vec<f64>; 3] = [
        axis_variance(dims[0], &kernel),
        axis_variance(dims[1], &kernel),
        axis_variance(dims[2], &kernel),
    ];
    let mut lattice = Lattice3D::new(dims, values)?;
    for i in 0..len {
        let (x, y, z) = lattice.coords(i);
        let v = var[0][x] * var[1][y] * var[2][z];
        lattice.values[i] *= libm::sqrt(cfg.target_variance / v);
    }
    Ok(lattice)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixtureSignalConfig {
    /// Probability that a voxel is non-null.
    pub propensity: f64,
    /// Fisher-z value of non-null voxels.
    pub h1_theta: f64,
    /// Smoothing applied to the signal; 0 disables it.
    pub smoothing_sd_voxels: f64,
}

impl MixtureSignalConfig {
    pub fn from_correlation(propensity: f64, rho: f64, smoothing_sd_voxels: f64) -> Result<Self> {
        let cfg = MixtureSignalConfig {
            propensity,
            h1_theta: fisher_transform(rho)?,
            smoothing_sd_voxels,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.propensity) {
            return Err(Error::Config("propensity must lie in [0, 1]"));
        }
        if !self.h1_theta.is_finite() {
            return Err(Error::Config("h1_theta must be finite"));
        }
        if !(self.smoothing_sd_voxels >= 0.0) || !self.smoothing_sd_voxels.is_finite() {
            return Err(Error::Config("smoothing_sd_voxels must be nonnegative"));
        }
        Ok(())
    }
}

/// Independent Bernoulli(propensity) non-null voxels carrying `h1_theta`,
/// zeros elsewhere, optionally smoothed. The mask records the pre-smoothing
/// non-null voxels.
pub fn generate_mixture_signal(cfg: &MixtureSignalConfig, dims: Dims, seed: u64) -> Result<Lattice3D> {
    cfg.validate()?;
    let len = check_dims(dims)?;
    let mut rng = seeded(seed);
    let mask: Vec<bool> = (0..len).map(|_| rng.random::<f64>() < cfg.propensity).collect();
    let mut values: Vec<f64> = mask
        .iter()
        .map(|&nonnull| if nonnull { cfg.h1_theta } else { 0.0 })
        .collect();
    gaussian_smooth(&mut values, dims, cfg.smoothing_sd_voxels)?;
    Lattice3D::new(dims, values)?.with_mask(mask)
}

/// Two-component normal mixture whose first ("null") component has mean 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixtureParams {
    pub weight_null: f64,
    pub sd_null: f64,
    pub mean_alt: f64,
    pub sd_alt: f64,
}

impl MixtureParams {
    pub fn weight_alt(&self) -> f64 {
        1.0 - self.weight_null
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.weight_null) {
            return Err(Error::Config("weight_null must lie in [0, 1]"));
        }
        if !(self.sd_null > 0.0 && self.sd_null.is_finite()) || !(self.sd_alt > 0.0 && self.sd_alt.is_finite()) {
            return Err(Error::Config("mixture standard deviations must be positive"));
        }
        if !self.mean_alt.is_finite() {
            return Err(Error::Config("mean_alt must be finite"));
        }
        Ok(())
    }

    /// Log density of the mixture at `v`.
    pub fn log_density(&self, v: f64) -> f64 {
        let (l0, l1) = self.component_log_densities(v);
        special::log_add_exp(l0, l1)
    }

    fn component_log_densities(&self, v: f64) -> (f64, f64) {
        let l0 = libm::log(self.weight_null) + special::log_pdf(v / self.sd_null) - libm::log(self.sd_null);
        let l1 =
            libm::log(self.weight_alt()) + special::log_pdf((v - self.mean_alt) / self.sd_alt) - libm::log(self.sd_alt);
        (l0, l1)
    }
}

impl Default for MixtureParams {
    fn default() -> Self {
        MixtureParams {
            weight_null: 0.8,
            sd_null: 0.2,
            mean_alt: libm::atanh(0.5),
            sd_alt: 0.15,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixtureFit {
    /// The pinned-mean component is always reported as the null component.
    pub params: MixtureParams,
    pub log_likelihood: f64,
    pub iterations: usize,
    pub converged: bool,
    /// The alternative component vanished or merged into the null one.
    pub collapsed: bool,
}

const EM_MAX_ITERATIONS: usize = 500;
const EM_REL_TOL: f64 = 1e-8;

/// EM fit of a two-component normal mixture with the first mean fixed at 0.
///
/// Stops when the relative log-likelihood improvement drops below `1e-8` or
/// after 500 iterations. A fit whose alternative component loses its weight,
/// sits on top of the null component, or does not beat a single zero-mean
/// normal by the BIC penalty of its three extra parameters is returned with
/// `collapsed` set.
pub fn fit_two_component_mixture(values: &[f64]) -> Result<MixtureFit> {
    if values.len() < 10 {
        return Err(Error::Fit("need at least 10 values"));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Fit("values must be finite"));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    if !(var > 0.0) {
        return Err(Error::Fit("data has zero variance"));
    }
    let sd = libm::sqrt(var);
    let var_floor = (1e-6 * sd) * (1e-6 * sd);

    let mut sorted = values.to_vec();
    sorted.sort_unstable_by(f64::total_cmp);
    let q = |p: f64| sorted[((sorted.len() - 1) as f64 * p) as usize];
    let (q05, q95) = (q(0.05), q(0.95));
    let mut params = MixtureParams {
        weight_null: 0.7,
        sd_null: sd,
        mean_alt: if q95.abs() >= q05.abs() { q95 } else { q05 },
        sd_alt: 0.5 * sd,
    };

    let mut resp = vec![0.0; values.len()];
    let mut prev_ll = f64::NEG_INFINITY;
    let mut converged = false;
    let mut iterations = 0;
    let mut ll = f64::NEG_INFINITY;
    while iterations < EM_MAX_ITERATIONS {
        iterations += 1;
        // E step.
        ll = 0.0;
        for (r, &v) in resp.iter_mut().zip(values) {
            let (l0, l1) = params.component_log_densities(v);
            let total = special::log_add_exp(l0, l1);
            *r = libm::exp(l1 - total);
            ll += total;
        }
        if prev_ll.is_finite() && (ll - prev_ll) <= EM_REL_TOL * prev_ll.abs().max(1e-300) {
            converged = true;
            break;
        }
        prev_ll = ll;

        // M step.
        let w1: f64 = resp.iter().sum();
        let w0 = n - w1;
        if w1 <= 0.0 || w0 <= 0.0 {
            break;
        }
        let mean_alt = resp.iter().zip(values).map(|(r, v)| r * v).sum::<f64>() / w1;
        let var_alt = resp
            .iter()
            .zip(values)
            .map(|(r, v)| r * (v - mean_alt) * (v - mean_alt))
            .sum::<f64>()
            / w1;
        let var_null = resp.iter().zip(values).map(|(r, v)| (1.0 - r) * v * v).sum::<f64>() / w0;
        params = MixtureParams {
            weight_null: w0 / n,
            sd_null: libm::sqrt(var_null.max(var_floor)),
            mean_alt,
            sd_alt: libm::sqrt(var_alt.max(var_floor)),
        };
    }

    let second_moment = values.iter().map(|v| v * v).sum::<f64>() / n;
    let ll_single = -0.5 * n * (libm::log(second_moment) + 1.0) - n * special::LN_SQRT_2PI;
    let collapsed = params.weight_alt() < 0.01
        || params.weight_null < 0.01
        || params.mean_alt.abs() < 0.1 * params.sd_null.max(params.sd_alt)
        || ll - ll_single < 1.5 * libm::log(n);
    Ok(MixtureFit {
        params,
        log_likelihood: ll,
        iterations,
        converged,
        collapsed,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FmriGenConfig {
    pub dims: Dims,
    pub mixture: MixtureParams,
    /// Prior sd of the kernel that pulls raw draws toward their component mean.
    pub shrink_kernel_sd: f64,
    pub signal_smoothing_sd_voxels: f64,
    pub noise_kernel_sd_voxels: f64,
    pub n_subjects: u32,
}

impl Default for FmriGenConfig {
    fn default() -> Self {
        FmriGenConfig {
            dims: [20, 20, 20],
            // Smoothing i.i.d. draws averages the non-null voxels into their
            // neighbours, so the non-null mean sits above the mixture default.
            mixture: MixtureParams {
                mean_alt: libm::atanh(0.7),
                ..MixtureParams::default()
            },
            shrink_kernel_sd: 0.13,
            signal_smoothing_sd_voxels: 0.55,
            noise_kernel_sd_voxels: 1.5,
            n_subjects: 16,
        }
    }
}

impl FmriGenConfig {
    pub fn validate(&self) -> Result<()> {
        check_dims(self.dims)?;
        self.mixture.validate()?;
        if !(self.shrink_kernel_sd > 0.0) || !self.shrink_kernel_sd.is_finite() {
            return Err(Error::Config("shrink_kernel_sd must be positive"));
        }
        if !(self.signal_smoothing_sd_voxels > 0.0) || !self.signal_smoothing_sd_voxels.is_finite() {
            return Err(Error::Config("signal_smoothing_sd_voxels must be positive"));
        }
        if !(self.noise_kernel_sd_voxels > 0.0) || !self.noise_kernel_sd_voxels.is_finite() {
            return Err(Error::Config("noise_kernel_sd_voxels must be positive"));
        }
        if self.n_subjects < 4 {
            return Err(Error::Config("n_subjects must be at least 4"));
        }
        Ok(())
    }

    pub fn noise_variance(&self) -> f64 {
        1.0 / (self.n_subjects - 3) as f64
    }
}

/// fMRI-like volume: a mixture signal, shrunk toward its component means,
/// smoothed, plus independent GRF noise of variance `1 / (n_subjects - 3)`.
///
/// Shrinkage is the posterior mean under a normal prior of sd
/// `shrink_kernel_sd` centred at the component mean:
/// `mu + (v - mu) * tau^2 / (tau^2 + s^2)`.
///
/// Returns `(data, truth)`; both carry the component mask.
pub fn generate_fmri_like(cfg: &FmriGenConfig, seed: u64) -> Result<(Lattice3D, Lattice3D)> {
    cfg.validate()?;
    let dims = cfg.dims;
    let len = check_dims(dims)?;
    let mix = cfg.mixture;
    let tau2 = cfg.shrink_kernel_sd * cfg.shrink_kernel_sd;

    let mut rng = seeded(derive_seed(seed, 0, 0));
    let mut mask = Vec::with_capacity(len);
    let mut signal = Vec::with_capacity(len);
    for _ in 0..len {
        let alt = rng.random::<f64>() < mix.weight_alt();
        let (mu, s) = if alt {
            (mix.mean_alt, mix.sd_alt)
        } else {
            (0.0, mix.sd_null)
        };
        let raw = mu + s * rng.sample::<f64, _>(StandardNormal);
        signal.push(mu + (raw - mu) * tau2 / (tau2 + s * s));
        mask.push(alt);
    }
    gaussian_smooth(&mut signal, dims, cfg.signal_smoothing_sd_voxels)?;

    let noise = generate_grf(
        &GrfConfig {
            dims,
            kernel_sd_voxels: cfg.noise_kernel_sd_voxels,
            target_variance: cfg.noise_variance(),
        },
        derive_seed(seed, 1, 0),
    )?;
    let data: Vec<f64> = signal.iter().zip(noise.values()).map(|(s, e)| s + e).collect();
    let truth = Lattice3D::new(dims, signal)?.with_mask(mask.clone())?;
    let data = Lattice3D::new(dims, data)?.with_mask(mask)?;
    Ok((data, truth))
}

/// Three-state hidden Markov chain with normal emissions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HmmConfig {
    pub transition: [[f64; 3]; 3],
    pub state_means: [f64; 3],
    pub state_sd: f64,
    pub initial_state: usize,
}

impl Default for HmmConfig {
    fn default() -> Self {
        HmmConfig {
            transition: [[0.95, 0.025, 0.025], [0.05, 0.9, 0.05], [0.05, 0.05, 0.9]],
            state_means: [0.0, 2.0, 3.5],
            state_sd: 1.0,
            initial_state: 0,
        }
    }
}

impl HmmConfig {
    pub fn validate(&self) -> Result<()> {
        for row in &self.transition {
            if row.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
                return Err(Error::Config("transition probabilities must be nonnegative"));
            }
            if (row.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
                return Err(Error::Config("transition rows must sum to 1"));
            }
        }
        if self.state_means.iter().any(|m| !m.is_finite()) {
            return Err(Error::Config("state means must be finite"));
        }
        if !(self.state_sd > 0.0) || !self.state_sd.is_finite() {
            return Err(Error::Config("state_sd must be positive"));
        }
        if self.initial_state >= 3 {
            return Err(Error::Config("initial_state must be 0, 1 or 2"));
        }
        Ok(())
    }
}

/// Two-sided p-values of `m` emissions from the chain, starting in
/// `initial_state`.
pub fn generate_hmm_pvalues(cfg: &HmmConfig, m: usize, seed: u64) -> Result<Vec<f64>> {
    cfg.validate()?;
    if m == 0 {
        return Err(Error::Config("m must be at least 1"));
    }
    let mut rng = seeded(seed);
    let mut state = cfg.initial_state;
    let mut out = Vec::with_capacity(m);
    for i in 0..m {
        if i > 0 {
            let u: f64 = rng.random();
            let row = &cfg.transition[state];
            state = if u < row[0] {
                0
            } else if u < row[0] + row[1] {
                1
            } else {
                2
            };
        }
        let z = cfg.state_means[state] + cfg.state_sd * rng.sample::<f64, _>(StandardNormal);
        out.push(special::two_sided_p(z));
    }
    Ok(out)
}
