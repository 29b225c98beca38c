//! Selection rules and the thresholds they imply.
//!
//! A rule turns per-unit statistics into a selected set plus an effective
//! threshold. Thresholds are reported on three scales, linked through the
//! Fisher-z approximation:
//!
//! * `threshold_p`: two-sided p-value cutoff;
//! * `threshold_z`: the standard normal statistic with that p-value,
//!   i.e. `|atanh(r)| * sqrt(n - 3)` for correlations;
//! * `threshold_r`: the correlation cutoff, which needs `n`.
//!
//! After BH the realized cutoff `k * alpha / m` is treated as a fixed
//! threshold for downstream conditioning.

use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::correlation::{fisher_sd, fisher_transform, inverse_fisher};
use crate::error::{Error, Result};
use crate::special;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SelectionRule {
    /// Select `|r| >= c_r`.
    FixedCorrelation(f64),
    /// Select `p <= alpha / m`.
    Bonferroni(f64),
    /// Benjamini-Hochberg step-up at level `alpha`.
    BenjaminiHochberg(f64),
}

impl SelectionRule {
    pub fn validate(&self) -> Result<()> {
        let (name, v) = match *self {
            SelectionRule::FixedCorrelation(v) => ("c_r", v),
            SelectionRule::Bonferroni(v) => ("alpha", v),
            SelectionRule::BenjaminiHochberg(v) => ("alpha", v),
        };
        if v > 0.0 && v < 1.0 {
            Ok(())
        } else {
            Err(Error::domain(name, v, "rule parameter must lie in (0, 1)"))
        }
    }
}

impl fmt::Display for SelectionRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SelectionRule::FixedCorrelation(v) => write!(f, "fixed:{v}"),
            SelectionRule::Bonferroni(v) => write!(f, "bonferroni:{v}"),
            SelectionRule::BenjaminiHochberg(v) => write!(f, "bh:{v}"),
        }
    }
}

/// Parses `fixed:<c>`, `bonferroni:<alpha>` or `bh:<alpha>`.
impl FromStr for SelectionRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (kind, value) = s
            .split_once(':')
            .ok_or(Error::Config("rule must look like fixed:<c>, bonferroni:<a> or bh:<a>"))?;
        let v: f64 = value
            .trim()
            .parse()
            .map_err(|_| Error::Config("rule parameter is not a number"))?;
        let rule = match kind.trim().to_ascii_lowercase().as_str() {
            "fixed" => SelectionRule::FixedCorrelation(v),
            "bonferroni" => SelectionRule::Bonferroni(v),
            "bh" | "fdr" => SelectionRule::BenjaminiHochberg(v),
            _ => return Err(Error::Config("unknown rule; expected fixed, bonferroni or bh")),
        };
        rule.validate()?;
        Ok(rule)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectionResult {
    /// Selected indices in ascending order.
    pub selected: Vec<usize>,
    pub threshold_p: f64,
    pub threshold_z: f64,
    /// Only known once a sample size is attached.
    pub threshold_r: Option<f64>,
    pub rule: SelectionRule,
    pub m: usize,
}

impl SelectionResult {
    pub fn is_empty(&self) -> bool {
        self.selected.is_empty()
    }

    /// Fills `threshold_r` from `threshold_p` for sample size `n`.
    pub fn with_sample_size(mut self, n: u32) -> Result<Self> {
        self.threshold_r = Some(correlation_from_p(self.threshold_p, n)?);
        Ok(self)
    }

    /// Boolean mask of length `m`.
    pub fn mask(&self) -> Vec<bool> {
        let mut mask = alloc::vec![false; self.m];
        for &i in &self.selected {
            mask[i] = true;
        }
        mask
    }
}

/// Two-sided p-value of `r` under `rho = 0`, using the Fisher-z normal
/// approximation: `2 * (1 - Phi(|atanh(r)| * sqrt(n - 3)))`.
pub fn p_from_correlation(r: f64, n: u32) -> Result<f64> {
    let z = fisher_transform(r)?;
    let sd = fisher_sd(n)?;
    Ok(special::two_sided_p(z / sd))
}

/// Inverse of [`p_from_correlation`] on `r > 0`.
pub fn correlation_from_p(p: f64, n: u32) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::domain("p", p, "must lie in (0, 1)"));
    }
    let sd = fisher_sd(n)?;
    Ok(inverse_fisher(special::z_from_two_sided_p(p) * sd))
}

fn check_pvalues(pvalues: &[f64]) -> Result<()> {
    if pvalues.is_empty() {
        return Err(Error::domain("m", 0.0, "need at least one p-value"));
    }
    for &p in pvalues {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::domain("p", p, "p-values must lie in [0, 1]"));
        }
    }
    Ok(())
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::domain("alpha", alpha, "must lie in (0, 1)"))
    }
}

fn result_from_p_cutoff(pvalues: &[f64], threshold_p: f64, rule: SelectionRule) -> SelectionResult {
    let selected = pvalues
        .iter()
        .enumerate()
        .filter(|&(_, &p)| p <= threshold_p)
        .map(|(i, _)| i)
        .collect();
    SelectionResult {
        selected,
        threshold_p,
        threshold_z: special::z_from_two_sided_p(threshold_p),
        threshold_r: None,
        rule,
        m: pvalues.len(),
    }
}

/// Benjamini-Hochberg step-up selection.
///
/// With `p_(1) <= ... <= p_(m)`, let `k = max { i : p_(i) <= i * alpha / m }`.
/// Every index with `p <= k * alpha / m` is selected and `k * alpha / m` is
/// returned as the effective threshold. When no `i` qualifies the selection
/// is empty and the threshold is `alpha / m`.
pub fn bh_select(pvalues: &[f64], alpha: f64) -> Result<SelectionResult> {
    check_pvalues(pvalues)?;
    check_alpha(alpha)?;
    let m = pvalues.len();
    let mut sorted: Vec<f64> = pvalues.to_vec();
    sorted.sort_unstable_by(f64::total_cmp);
    let mf = m as f64;
    let k = sorted
        .iter()
        .enumerate()
        .rev()
        .find(|&(i, &p)| p <= (i + 1) as f64 * alpha / mf)
        .map_or(0, |(i, _)| i + 1);
    let threshold_p = k.max(1) as f64 * alpha / mf;
    let rule = SelectionRule::BenjaminiHochberg(alpha);
    if k == 0 {
        let mut res = result_from_p_cutoff(pvalues, threshold_p, rule);
        res.selected.clear();
        return Ok(res);
    }
    Ok(result_from_p_cutoff(pvalues, threshold_p, rule))
}

/// Selects `p <= alpha / m`.
pub fn bonferroni_select(pvalues: &[f64], alpha: f64) -> Result<SelectionResult> {
    check_pvalues(pvalues)?;
    check_alpha(alpha)?;
    let threshold_p = alpha / pvalues.len() as f64;
    Ok(result_from_p_cutoff(
        pvalues,
        threshold_p,
        SelectionRule::Bonferroni(alpha),
    ))
}

/// Selects `|r| >= c_r` (closed region).
pub fn fixed_select(correlations: &[f64], n: u32, c_r: f64) -> Result<SelectionResult> {
    let rule = SelectionRule::FixedCorrelation(c_r);
    rule.validate()?;
    for &r in correlations {
        fisher_transform(r)?;
    }
    let threshold_p = p_from_correlation(c_r, n)?;
    let selected = correlations
        .iter()
        .enumerate()
        .filter(|&(_, &r)| r.abs() >= c_r)
        .map(|(i, _)| i)
        .collect();
    Ok(SelectionResult {
        selected,
        threshold_p,
        threshold_z: libm::atanh(c_r) / fisher_sd(n)?,
        threshold_r: Some(c_r),
        rule,
        m: correlations.len(),
    })
}

/// Applies `rule` to correlations that share one sample size `n`.
pub fn select_correlations(correlations: &[f64], n: u32, rule: SelectionRule) -> Result<SelectionResult> {
    rule.validate()?;
    match rule {
        SelectionRule::FixedCorrelation(c_r) => fixed_select(correlations, n, c_r),
        SelectionRule::Bonferroni(alpha) | SelectionRule::BenjaminiHochberg(alpha) => {
            let pvalues = correlations
                .iter()
                .map(|&r| p_from_correlation(r, n))
                .collect::<Result<Vec<_>>>()?;
            let res = if let SelectionRule::Bonferroni(_) = rule {
                bonferroni_select(&pvalues, alpha)?
            } else {
                bh_select(&pvalues, alpha)?
            };
            res.with_sample_size(n)
        }
    }
}

/// Applies a rule to p-values. A fixed correlation cutoff needs `n` to be
/// expressed as a p-value cutoff.
pub fn select_pvalues(pvalues: &[f64], rule: SelectionRule, n: Option<u32>) -> Result<SelectionResult> {
    rule.validate()?;
    match rule {
        SelectionRule::Bonferroni(alpha) => bonferroni_select(pvalues, alpha),
        SelectionRule::BenjaminiHochberg(alpha) => bh_select(pvalues, alpha),
        SelectionRule::FixedCorrelation(c_r) => {
            let n = n.ok_or(Error::Config("a fixed correlation rule needs a sample size"))?;
            check_pvalues(pvalues)?;
            let threshold_p = p_from_correlation(c_r, n)?;
            let mut res = result_from_p_cutoff(pvalues, threshold_p, rule);
            res.threshold_r = Some(c_r);
            Ok(res)
        }
    }
}
