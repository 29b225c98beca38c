//! Post-selection estimation for Pearson correlations.
//!
//! An observed correlation `r` from `n` subjects is mapped to the Fisher-z
//! scale, `y = atanh(r)`, where it is approximately `N(atanh(rho), 1/(n-3))`.
//! Conditioning on `|r| >= threshold` becomes conditioning on
//! `|y| >= atanh(threshold)`, so the truncated normal machinery applies
//! directly and results are mapped back with `tanh`.

use crate::error::{Error, Result};
use crate::truncnorm::{self, ConditionalModel, SolverConfig};

/// Largest `f64` strictly below 1, used to keep `tanh` inside `(-1, 1)`.
const BELOW_ONE: f64 = 1.0 - f64::EPSILON / 2.0;

/// `atanh(r) = 0.5 * ln((1 + r) / (1 - r))`.
pub fn fisher_transform(r: f64) -> Result<f64> {
    if r.is_nan() || r.abs() >= 1.0 {
        return Err(Error::domain("r", r, "correlation must lie strictly inside (-1, 1)"));
    }
    Ok(libm::atanh(r))
}

/// `tanh(theta)`, clamped so that large `theta` still maps strictly inside
/// `(-1, 1)`.
pub fn inverse_fisher(theta: f64) -> f64 {
    libm::tanh(theta).clamp(-BELOW_ONE, BELOW_ONE)
}

/// Standard deviation of the Fisher-z statistic for `n` subjects.
pub fn fisher_sd(n: u32) -> Result<f64> {
    if n < 4 {
        return Err(Error::domain("n", n as f64, "sample size must be at least 4"));
    }
    Ok(1.0 / libm::sqrt((n - 3) as f64))
}

/// An observed correlation with its sample size.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorrelationObservation {
    r: f64,
    n: u32,
    z: f64,
}

impl CorrelationObservation {
    pub fn new(r: f64, n: u32) -> Result<Self> {
        let z = fisher_transform(r)?;
        fisher_sd(n)?;
        Ok(CorrelationObservation { r, n, z })
    }

    pub fn r(&self) -> f64 {
        self.r
    }

    pub fn n(&self) -> u32 {
        self.n
    }

    /// Fisher-z image of `r`.
    pub fn z(&self) -> f64 {
        self.z
    }

    /// `1 / sqrt(n - 3)`
    pub fn sigma(&self) -> f64 {
        1.0 / libm::sqrt((self.n - 3) as f64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SelectiveEstimate {
    /// Conditional estimate on the correlation scale.
    pub rho_hat: f64,
    /// Conditional estimate on the Fisher-z scale.
    pub theta_hat: f64,
    /// CQC interval on the correlation scale, when requested.
    pub interval: Option<(f64, f64)>,
    pub threshold_r: f64,
}

fn check_threshold(threshold_r: f64) -> Result<()> {
    if !(threshold_r > 0.0 && threshold_r < 1.0) {
        return Err(Error::domain(
            "threshold_r",
            threshold_r,
            "threshold must lie in (0, 1)",
        ));
    }
    Ok(())
}

fn check_selected(obs: &CorrelationObservation, threshold_r: f64) -> Result<()> {
    check_threshold(threshold_r)?;
    if obs.r.abs() < threshold_r {
        return Err(Error::SelectionViolation {
            value: obs.r,
            threshold: threshold_r,
        });
    }
    Ok(())
}

/// Conditional MLE of the correlation given that `|r| >= threshold_r`.
pub fn conditional_correlation_estimate(
    obs: &CorrelationObservation,
    threshold_r: f64,
    cfg: &SolverConfig,
) -> Result<SelectiveEstimate> {
    check_selected(obs, threshold_r)?;
    let c = libm::atanh(threshold_r);
    // atanh is monotone, but guard against a last-ulp inversion at the boundary.
    let y = if obs.z.abs() < c { c.copysign(obs.z) } else { obs.z };
    let theta_hat = truncnorm::conditional_mle(y, obs.sigma(), c, cfg)?;
    let mut rho_hat = inverse_fisher(theta_hat);
    // theta_hat <= |y| holds exactly; tanh(atanh(r)) may still overshoot r by an ulp.
    if rho_hat.abs() > obs.r.abs() {
        rho_hat = obs.r;
    }
    Ok(SelectiveEstimate {
        rho_hat,
        theta_hat,
        interval: None,
        threshold_r,
    })
}

/// Conditional estimate together with its CQC interval at level `1 - alpha`.
pub fn selective_estimate(
    obs: &CorrelationObservation,
    threshold_r: f64,
    alpha: f64,
    cfg: &SolverConfig,
) -> Result<SelectiveEstimate> {
    let mut est = conditional_correlation_estimate(obs, threshold_r, cfg)?;
    est.interval = Some(cqc_interval(obs, threshold_r, alpha)?);
    Ok(est)
}

/// Conditional Quasi-Conventional confidence interval for `rho`.
///
/// Equal-tailed inversion of the truncated CDF on the Fisher-z scale: the
/// upper endpoint solves `F(y; theta) = alpha / 2` and the lower endpoint
/// solves `F(y; theta) = 1 - alpha / 2`. Both are mapped back with `tanh`.
pub fn cqc_interval(obs: &CorrelationObservation, threshold_r: f64, alpha: f64) -> Result<(f64, f64)> {
    check_selected(obs, threshold_r)?;
    let c = libm::atanh(threshold_r);
    let y = if obs.z.abs() < c { c.copysign(obs.z) } else { obs.z };
    let (lo, hi) = cqc_interval_fisher(y, obs.sigma(), c, alpha)?;
    Ok((inverse_fisher(lo), inverse_fisher(hi)))
}

/// Bisection width on `theta` for the interval endpoints.
const CQC_TOLERANCE: f64 = 1e-9;
/// Half-width of the endpoint search bracket, in units of `sigma`.
const CQC_BRACKET_SDS: f64 = 20.0;

/// [`cqc_interval`] on the Fisher-z scale for a truncated observation `y`.
pub fn cqc_interval_fisher(y: f64, sigma: f64, c: f64, alpha: f64) -> Result<(f64, f64)> {
    truncnorm::check_scale(sigma, c)?;
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::domain("alpha", alpha, "must lie in (0, 1)"));
    }
    if y.is_nan() || y.abs() < c {
        return Err(Error::SelectionViolation { value: y, threshold: c });
    }
    if !y.is_finite() {
        return Err(Error::domain("y", y, "must be finite"));
    }
    if y < 0.0 {
        let (lo, hi) = cqc_positive(-y, sigma, c, alpha)?;
        return Ok((-hi, -lo));
    }
    cqc_positive(y, sigma, c, alpha)
}

fn cqc_positive(y: f64, sigma: f64, c: f64, alpha: f64) -> Result<(f64, f64)> {
    let a = y - CQC_BRACKET_SDS * sigma;
    let b = y + CQC_BRACKET_SDS * sigma;
    let cdf_at = |theta: f64| -> Result<f64> { Ok(ConditionalModel::new(theta, sigma, c)?.cdf(y)) };

    // The endpoints rely on F(y; theta) being nonincreasing in theta. Check
    // it on a grid across the bracket before trusting the bisection.
    const CHECKS: usize = 16;
    let mut prev = f64::INFINITY;
    for i in 0..=CHECKS {
        let t = a + (b - a) * i as f64 / CHECKS as f64;
        let v = cdf_at(t)?;
        if v > prev + 1e-12 {
            return Err(Error::NonMonotone { lo: a, hi: b });
        }
        prev = v;
    }

    let hi = invert_decreasing(&cdf_at, 0.5 * alpha, a, b)?;
    let lo = invert_decreasing(&cdf_at, 1.0 - 0.5 * alpha, a, b)?;
    Ok((lo.min(hi), hi.max(lo)))
}

const MAX_WIDENINGS: usize = 40;

/// Solves `f(theta) = target` for nonincreasing `f`, starting from `[a, b]`.
fn invert_decreasing<F>(f: &F, target: f64, a: f64, b: f64) -> Result<f64>
where
    F: Fn(f64) -> Result<f64>,
{
    // Near the selection boundary an endpoint can sit far outside the
    // initial bracket, so widen it geometrically while `f` keeps its order.
    let (mut lo, mut hi) = (a, b);
    let (mut f_lo, mut f_hi) = (f(lo)?, f(hi)?);
    let mut step = b - a;
    let mut widenings = 0;
    while f_lo < target || f_hi > target {
        if widenings == MAX_WIDENINGS {
            return Err(Error::NotBracketed { lo, hi });
        }
        widenings += 1;
        if f_lo < target {
            let next = f(lo - step)?;
            if next + 1e-12 < f_lo {
                return Err(Error::NonMonotone { lo: lo - step, hi });
            }
            lo -= step;
            f_lo = next;
        } else {
            let next = f(hi + step)?;
            if next > f_hi + 1e-12 {
                return Err(Error::NonMonotone { lo, hi: hi + step });
            }
            hi += step;
            f_hi = next;
        }
        step *= 2.0;
    }
    while hi - lo > CQC_TOLERANCE {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid)? > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}
