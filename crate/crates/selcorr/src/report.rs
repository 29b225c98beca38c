//! Selection and conditional estimation over a user-supplied table, and the
//! calibration plot data built from it.

use std::fmt::Write as _;
use std::io::Write;

use selcorr_core::correlation::{fisher_sd, selective_estimate};
use selcorr_core::selection::{fixed_select, p_from_correlation, select_pvalues, SelectionRule};
use selcorr_core::special::{two_sided_p, z_from_two_sided_p};
use selcorr_core::truncnorm::SolverConfig;

use crate::error::{Error, Result};
use crate::io::{fmt_num, InputRow};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimateRow {
    /// Line of the observation in the input file.
    pub line: u64,
    pub r: f64,
    pub n: u32,
    pub rho_hat: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    /// Effective cutoff on `|r|` for this row's sample size.
    pub threshold_r: f64,
    /// Effective cutoff on the standard-normal statistic.
    pub threshold_z: f64,
    pub threshold_p: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimateTable {
    pub rule: SelectionRule,
    pub alpha: f64,
    pub m: usize,
    /// Selected rows in input order.
    pub rows: Vec<EstimateRow>,
}

/// Applies `rule` to the table and estimates every selected row, with a CQC
/// interval at level `1 - alpha`.
///
/// P-value rules share one p-value cutoff, so rows with different sample
/// sizes get different correlation cutoffs. The fixed rule cuts `|r|`
/// directly.
pub fn estimate_table(rows: &[InputRow], rule: SelectionRule, alpha: f64) -> Result<EstimateTable> {
    rule.validate()?;
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::config("alpha must lie in (0, 1)"));
    }
    if rows.is_empty() {
        return Ok(EstimateTable {
            rule,
            alpha,
            m: 0,
            rows: Vec::new(),
        });
    }
    let selected: Vec<usize>;
    let mut p_cut = f64::NAN;
    match rule {
        SelectionRule::FixedCorrelation(c) => {
            let rs: Vec<f64> = rows.iter().map(|r| r.obs.r()).collect();
            selected = fixed_select(&rs, rows[0].obs.n(), c)?.selected;
        }
        _ => {
            let p = rows
                .iter()
                .map(|r| p_from_correlation(r.obs.r(), r.obs.n()))
                .collect::<selcorr_core::Result<Vec<f64>>>()?;
            let sel = select_pvalues(&p, rule, None)?;
            p_cut = sel.threshold_p;
            selected = sel.selected;
        }
    }

    let solver = SolverConfig::default();
    let mut out = Vec::with_capacity(selected.len());
    for i in selected {
        let InputRow { line, obs } = rows[i];
        let sigma = fisher_sd(obs.n())?;
        let (threshold_r, threshold_z, threshold_p) = match rule {
            SelectionRule::FixedCorrelation(c) => {
                let z = c.atanh() / sigma;
                (c, z, two_sided_p(z))
            }
            _ => {
                let z = z_from_two_sided_p(p_cut);
                ((z * sigma).tanh(), z, p_cut)
            }
        };
        // A row selected at p == cutoff can sit an ulp under the mapped cutoff.
        let cond_threshold = if obs.r().abs() < threshold_r {
            if threshold_r - obs.r().abs() > 1e-9 * threshold_r {
                return Err(selcorr_core::Error::SelectionViolation {
                    value: obs.r(),
                    threshold: threshold_r,
                }
                .into());
            }
            obs.r().abs()
        } else {
            threshold_r
        };
        let est = selective_estimate(&obs, cond_threshold, alpha, &solver)?;
        let (ci_lo, ci_hi) = est.interval.expect("interval requested");
        out.push(EstimateRow {
            line,
            r: obs.r(),
            n: obs.n(),
            rho_hat: est.rho_hat,
            ci_lo,
            ci_hi,
            threshold_r,
            threshold_z,
            threshold_p,
        });
    }
    Ok(EstimateTable {
        rule,
        alpha,
        m: rows.len(),
        rows: out,
    })
}

pub fn write_estimate_csv<W: Write>(w: W, table: &EstimateTable) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record([
        "line",
        "r",
        "n",
        "rho_hat",
        "ci_lo",
        "ci_hi",
        "threshold_r",
        "threshold_z",
        "threshold_p",
    ])?;
    for r in &table.rows {
        out.write_record([
            r.line.to_string(),
            fmt_num(r.r),
            r.n.to_string(),
            fmt_num(r.rho_hat),
            fmt_num(r.ci_lo),
            fmt_num(r.ci_hi),
            fmt_num(r.threshold_r),
            fmt_num(r.threshold_z),
            fmt_num(r.threshold_p),
        ])?;
    }
    out.flush().map_err(|e| Error::io("<estimate>", e))?;
    Ok(())
}

/// Selected rows sorted by observed `r`.
pub fn ccp_rows(table: &EstimateTable) -> Vec<EstimateRow> {
    let mut rows = table.rows.clone();
    rows.sort_by(|a, b| a.r.total_cmp(&b.r));
    rows
}

fn threshold_summary(rows: &[EstimateRow]) -> String {
    let lo = rows.iter().map(|r| r.threshold_r).fold(f64::INFINITY, f64::min);
    let hi = rows.iter().map(|r| r.threshold_r).fold(f64::NEG_INFINITY, f64::max);
    if rows.is_empty() {
        "NA".into()
    } else if lo == hi {
        fmt_num(lo)
    } else {
        format!("{} to {} (varies with n)", fmt_num(lo), fmt_num(hi))
    }
}

/// Calibration table: `#` header lines with the rule, cutoff and alpha,
/// then `observed_r,rho_hat,ci_lo,ci_hi` sorted by `observed_r`.
pub fn write_ccp_csv<W: Write>(mut w: W, table: &EstimateTable) -> Result<()> {
    let rows = ccp_rows(table);
    let mut head = String::new();
    let _ = writeln!(head, "# rule: {}", table.rule);
    let _ = writeln!(head, "# threshold_r: {}", threshold_summary(&rows));
    let _ = writeln!(head, "# alpha: {}", fmt_num(table.alpha));
    let _ = writeln!(head, "# selected: {} of {}", rows.len(), table.m);
    w.write_all(head.as_bytes()).map_err(|e| Error::io("<ccp>", e))?;
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["observed_r", "rho_hat", "ci_lo", "ci_hi"])?;
    for r in &rows {
        out.write_record([fmt_num(r.r), fmt_num(r.rho_hat), fmt_num(r.ci_lo), fmt_num(r.ci_hi)])?;
    }
    out.flush().map_err(|e| Error::io("<ccp>", e))?;
    Ok(())
}

/// Minimal SVG of the calibration plot: the identity line, the CQC band and
/// the conditional estimates against the observed correlation.
pub fn ccp_svg(table: &EstimateTable) -> String {
    const SIZE: f64 = 480.0;
    const PAD: f64 = 40.0;
    let rows = ccp_rows(table);
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SIZE}" height="{SIZE}" viewBox="0 0 {SIZE} {SIZE}">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    if rows.is_empty() {
        let _ = writeln!(svg, r#"<text x="{PAD}" y="{PAD}">no observations selected</text>"#);
        svg.push_str("</svg>\n");
        return svg;
    }
    let x0 = rows[0].r.min(0.0);
    let x1 = rows[rows.len() - 1].r.max(0.0);
    let y0 = rows.iter().map(|r| r.ci_lo).fold(x0, f64::min);
    let y1 = rows.iter().map(|r| r.ci_hi).fold(x1, f64::max);
    let span = |a: f64, b: f64| if b > a { b - a } else { 1.0 };
    let px = |x: f64| PAD + (x - x0) / span(x0, x1) * (SIZE - 2.0 * PAD);
    let py = |y: f64| SIZE - PAD - (y - y0) / span(y0, y1) * (SIZE - 2.0 * PAD);
    let points = |f: &dyn Fn(&EstimateRow) -> f64| {
        rows.iter()
            .map(|r| format!("{:.2},{:.2}", px(r.r), py(f(r))))
            .collect::<Vec<_>>()
            .join(" ")
    };

    let band = format!(
        "{} {}",
        points(&|r| r.ci_hi),
        rows.iter()
            .rev()
            .map(|r| format!("{:.2},{:.2}", px(r.r), py(r.ci_lo)))
            .collect::<Vec<_>>()
            .join(" ")
    );
    let _ = writeln!(
        svg,
        r##"<polygon points="{band}" fill="#9ecae1" fill-opacity="0.5" stroke="none"/>"##
    );
    let (lo, hi) = (x0.max(y0), x1.min(y1));
    let _ = writeln!(
        svg,
        r##"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="#636363" stroke-dasharray="4 3"/>"##,
        px(lo),
        py(lo),
        px(hi),
        py(hi)
    );
    let _ = writeln!(
        svg,
        r##"<polyline points="{}" fill="none" stroke="#08519c" stroke-width="2"/>"##,
        points(&|r| r.rho_hat)
    );
    let _ = writeln!(
        svg,
        r##"<line x1="{PAD}" y1="{b}" x2="{e}" y2="{b}" stroke="black"/><line x1="{PAD}" y1="{PAD}" x2="{PAD}" y2="{b}" stroke="black"/>"##,
        b = SIZE - PAD,
        e = SIZE - PAD
    );
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" font-size="12" text-anchor="middle">observed r</text>"#,
        SIZE / 2.0,
        SIZE - 8.0
    );
    let _ = writeln!(
        svg,
        r#"<text x="12" y="{}" font-size="12" transform="rotate(-90 12 {})" text-anchor="middle">estimate</text>"#,
        SIZE / 2.0,
        SIZE / 2.0
    );
    svg.push_str("</svg>\n");
    svg
}
