//! Error summaries over selected entries.

use serde::Serialize;

use crate::error::{Error, Result};

/// Summary of estimation errors `rho_hat - rho`.
///
/// Error fields are NaN when `undefined` is set, i.e. when nothing was
/// selected.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Metrics {
    pub bias: f64,
    pub median_bias: f64,
    pub mse: f64,
    pub power: f64,
    pub q05: f64,
    pub q95: f64,
    pub n_selected: usize,
    pub undefined: bool,
}

/// Type-7 (linear interpolation) quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    match sorted.len() {
        0 => f64::NAN,
        1 => sorted[0],
        len => {
            let h = (len - 1) as f64 * p.clamp(0.0, 1.0);
            let lo = h.floor() as usize;
            let hi = (lo + 1).min(len - 1);
            sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
        }
    }
}

pub fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.iter().sum::<f64>() / values.len() as f64
}

/// Sample standard deviation (divisor `len - 1`).
pub fn sd(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return f64::NAN;
    }
    let m = mean(values);
    let ss: f64 = values.iter().map(|v| (v - m) * (v - m)).sum();
    (ss / (values.len() - 1) as f64).sqrt()
}

impl Metrics {
    /// Summary of a list of errors; `power` and `n_selected` are passed in
    /// because they depend on the selection, not on the errors.
    pub fn from_errors(errors: &[f64], n_selected: usize, power: f64) -> Metrics {
        if errors.is_empty() {
            return Metrics {
                bias: f64::NAN,
                median_bias: f64::NAN,
                mse: f64::NAN,
                power,
                q05: f64::NAN,
                q95: f64::NAN,
                n_selected,
                undefined: true,
            };
        }
        let mut sorted = errors.to_vec();
        sorted.sort_unstable_by(f64::total_cmp);
        Metrics {
            bias: mean(errors),
            median_bias: quantile_sorted(&sorted, 0.5),
            mse: errors.iter().map(|e| e * e).sum::<f64>() / errors.len() as f64,
            power,
            q05: quantile_sorted(&sorted, 0.05),
            q95: quantile_sorted(&sorted, 0.95),
            n_selected,
            undefined: false,
        }
    }
}

/// Metrics over the selected entries.
///
/// Power is the fraction of non-null entries that were selected. Without a
/// mask every entry counts as non-null. With a mask that has no non-null
/// entries, power is 0.
pub fn compute_metrics(
    estimates: &[f64],
    truths: &[f64],
    selected: &[bool],
    nonnull: Option<&[bool]>,
) -> Result<Metrics> {
    let len = estimates.len();
    if truths.len() != len || selected.len() != len || nonnull.is_some_and(|m| m.len() != len) {
        return Err(Error::config("metric inputs must have equal lengths"));
    }
    let errors: Vec<f64> = (0..len)
        .filter(|&i| selected[i])
        .map(|i| estimates[i] - truths[i])
        .collect();
    let power = match nonnull {
        Some(mask) => {
            let total = mask.iter().filter(|&&b| b).count();
            let hits = mask.iter().zip(selected).filter(|&(&m, &s)| m && s).count();
            if total == 0 {
                0.0
            } else {
                hits as f64 / total as f64
            }
        }
        None if len == 0 => 0.0,
        None => errors.len() as f64 / len as f64,
    };
    Ok(Metrics::from_errors(&errors, errors.len(), power))
}
