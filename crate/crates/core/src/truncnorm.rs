//! The two-sided truncated normal family.
//!
//! `Y ~ N(theta, sigma^2)` is observed only when `|Y| >= c`. The observed
//! variable `X` has density `phi((x - theta) / sigma) / (sigma * Q_c(theta))`
//! on `|x| >= c` and zero on `(-c, c)`, where `Q_c(theta) = P(|Y| >= c)`.
//!
//! Everything is evaluated on the log scale so the model stays usable when
//! `theta` sits many standard deviations away from the selection region.

use crate::error::{Error, Result};
use crate::special;

/// Truncated normal model with location `theta`, known scale `sigma` and
/// two-sided threshold `c`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConditionalModel {
    theta: f64,
    sigma: f64,
    c: f64,
    log_q: f64,
}

/// Settings for [`conditional_mle`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    /// Bisection stops once `|score| <= tolerance`.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Initial bracket is `[x - k * sigma, x]` for this `k`.
    pub bracket_halfwidth_multiplier: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            tolerance: 1e-10,
            max_iterations: 200,
            bracket_halfwidth_multiplier: 12.0,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tolerance > 0.0) || !self.tolerance.is_finite() {
            return Err(Error::Config("tolerance must be positive and finite"));
        }
        if self.max_iterations == 0 {
            return Err(Error::Config("max_iterations must be at least 1"));
        }
        if !(self.bracket_halfwidth_multiplier > 0.0) || !self.bracket_halfwidth_multiplier.is_finite() {
            return Err(Error::Config(
                "bracket_halfwidth_multiplier must be positive and finite",
            ));
        }
        Ok(())
    }
}

pub(crate) fn check_scale(sigma: f64, c: f64) -> Result<()> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::domain("sigma", sigma, "must be positive and finite"));
    }
    if !(c > 0.0) || !c.is_finite() {
        return Err(Error::domain("c", c, "must be positive and finite"));
    }
    Ok(())
}

fn check_theta(theta: f64) -> Result<()> {
    if theta.is_finite() {
        Ok(())
    } else {
        Err(Error::domain("theta", theta, "must be finite"))
    }
}

fn check_observation(x: f64, c: f64) -> Result<()> {
    if x.is_nan() || x.abs() < c {
        return Err(Error::SelectionViolation { value: x, threshold: c });
    }
    if !x.is_finite() {
        return Err(Error::domain("x", x, "must be finite"));
    }
    Ok(())
}

/// `ln Q_c(theta)`: the log of the two tail masses, added on the log scale.
#[inline]
pub(crate) fn log_q(theta: f64, sigma: f64, c: f64) -> f64 {
    let lower = special::log_cdf((-c - theta) / sigma);
    let upper = special::log_cdf((theta - c) / sigma);
    special::log_add_exp(lower, upper)
}

/// Selection probability `Q_c(theta) = P(|Y| >= c)` for `Y ~ N(theta, sigma^2)`.
pub fn survival_mass(theta: f64, sigma: f64, c: f64) -> Result<f64> {
    check_scale(sigma, c)?;
    check_theta(theta)?;
    Ok(libm::exp(log_q(theta, sigma, c)))
}

/// `ln Q_c(theta)`, finite even when `Q_c` itself underflows.
pub fn log_survival_mass(theta: f64, sigma: f64, c: f64) -> Result<f64> {
    check_scale(sigma, c)?;
    check_theta(theta)?;
    Ok(log_q(theta, sigma, c))
}

impl ConditionalModel {
    pub fn new(theta: f64, sigma: f64, c: f64) -> Result<Self> {
        check_scale(sigma, c)?;
        check_theta(theta)?;
        Ok(ConditionalModel {
            theta,
            sigma,
            c,
            log_q: log_q(theta, sigma, c),
        })
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn survival_mass(&self) -> f64 {
        libm::exp(self.log_q)
    }

    /// Log density; `-inf` inside the truncation window.
    pub fn log_pdf(&self, x: f64) -> f64 {
        if x.abs() < self.c {
            return f64::NEG_INFINITY;
        }
        special::log_pdf((x - self.theta) / self.sigma) - libm::log(self.sigma) - self.log_q
    }

    pub fn pdf(&self, x: f64) -> f64 {
        if x.abs() < self.c {
            0.0
        } else {
            libm::exp(self.log_pdf(x))
        }
    }

    /// `P(X <= x)`. Flat at the left-tail mass across the window `[-c, c)`.
    pub fn cdf(&self, x: f64) -> f64 {
        let (theta, sigma, c) = (self.theta, self.sigma, self.c);
        if x.is_nan() {
            return f64::NAN;
        }
        let v = if x < -c {
            libm::exp(special::log_cdf((x - theta) / sigma) - self.log_q)
        } else if x < c {
            libm::exp(special::log_cdf((-c - theta) / sigma) - self.log_q)
        } else {
            // Upper tail computed directly so values near 1 keep precision.
            1.0 - libm::exp(special::log_cdf((theta - x) / sigma) - self.log_q)
        };
        v.clamp(0.0, 1.0)
    }

    /// `P(X > x)`.
    pub fn sf(&self, x: f64) -> f64 {
        let (theta, sigma, c) = (self.theta, self.sigma, self.c);
        if x >= c {
            libm::exp(special::log_cdf((theta - x) / sigma) - self.log_q).clamp(0.0, 1.0)
        } else {
            1.0 - self.cdf(x)
        }
    }
}

/// Density of the truncated observation.
pub fn conditional_pdf(x: f64, model: &ConditionalModel) -> f64 {
    model.pdf(x)
}

pub fn conditional_cdf(x: f64, model: &ConditionalModel) -> f64 {
    model.cdf(x)
}

#[inline]
fn loglik_unchecked(x: f64, theta: f64, sigma: f64, c: f64) -> f64 {
    special::log_pdf((x - theta) / sigma) - libm::log(sigma) - log_q(theta, sigma, c)
}

#[inline]
fn score_unchecked(x: f64, theta: f64, sigma: f64, c: f64) -> f64 {
    let lq = log_q(theta, sigma, c);
    let upper = libm::exp(special::log_pdf((c - theta) / sigma) - lq);
    let lower = libm::exp(special::log_pdf((-c - theta) / sigma) - lq);
    (x - theta) / (sigma * sigma) - (upper - lower) / sigma
}

/// Log-likelihood of `theta` given one truncated observation `x`.
pub fn conditional_loglik(x: f64, theta: f64, sigma: f64, c: f64) -> Result<f64> {
    check_scale(sigma, c)?;
    check_observation(x, c)?;
    check_theta(theta)?;
    Ok(loglik_unchecked(x, theta, sigma, c))
}

/// Derivative of [`conditional_loglik`] with respect to `theta`.
pub fn score(x: f64, theta: f64, sigma: f64, c: f64) -> Result<f64> {
    check_scale(sigma, c)?;
    check_observation(x, c)?;
    check_theta(theta)?;
    Ok(score_unchecked(x, theta, sigma, c))
}

/// Conditional maximum-likelihood estimate of `theta` from one observation
/// `x` with `|x| >= c`.
///
/// The likelihood is unimodal, so the score crosses zero once. For `x > 0`
/// the score is negative at `theta = x` and the root is bracketed by walking
/// left in steps of `k * sigma`; bisection then runs until the score is
/// within `cfg.tolerance` of zero. Negative observations are solved through
/// the mirror image, so the estimator is exactly odd.
pub fn conditional_mle(x: f64, sigma: f64, c: f64, cfg: &SolverConfig) -> Result<f64> {
    check_scale(sigma, c)?;
    check_observation(x, c)?;
    cfg.validate()?;
    if x < 0.0 {
        return solve_positive(-x, sigma, c, cfg).map(|t| -t);
    }
    solve_positive(x, sigma, c, cfg)
}

fn solve_positive(x: f64, sigma: f64, c: f64, cfg: &SolverConfig) -> Result<f64> {
    let f = |t: f64| score_unchecked(x, t, sigma, c);
    let step = cfg.bracket_halfwidth_multiplier * sigma;

    let mut hi = x;
    let f_hi = f(hi);
    if f_hi.abs() <= cfg.tolerance {
        return Ok(hi);
    }
    let mut lo = x - step;
    let mut width = step;
    let mut iterations = 0;
    while f(lo) <= 0.0 {
        iterations += 1;
        if iterations >= cfg.max_iterations {
            return Err(Error::NoConvergence { iterations, lo, hi });
        }
        hi = lo;
        width *= 2.0;
        lo -= width;
    }

    while iterations < cfg.max_iterations {
        iterations += 1;
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            // Bracket has collapsed to adjacent floats.
            return Ok(if f(lo).abs() <= f(hi).abs() { lo } else { hi });
        }
        let s = f(mid);
        if s.abs() <= cfg.tolerance {
            return Ok(mid);
        }
        if s > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Err(Error::NoConvergence { iterations, lo, hi })
}
