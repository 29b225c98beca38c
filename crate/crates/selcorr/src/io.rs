//! File formats: metric tables, run manifests, lattices and correlation
//! input tables.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use selcorr_core::correlation::CorrelationObservation;
use selcorr_core::simfields::Lattice3D;

use crate::error::{Error, Result};
use crate::experiments::{BinRow, DatasetRow, Metrics, MetricsRow, ModeRow, ThresholdRow};

pub const METRICS_HEADER: [&str; 13] = [
    "scenario",
    "rho",
    "n",
    "estimator",
    "scope",
    "bias",
    "median_bias",
    "mse",
    "power",
    "q05",
    "q95",
    "n_selected",
    "undefined",
];

/// Formats a number with 6 significant digits. NaN is written as `NA`.
pub fn fmt_num(v: f64) -> String {
    if v.is_nan() {
        return "NA".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if v == 0.0 {
        return "0".into();
    }
    let rounded: f64 = format!("{v:.5e}").parse().expect("formatted float parses");
    let a = rounded.abs();
    if (1e-4..1e6).contains(&a) {
        format!("{rounded}")
    } else {
        format!("{rounded:e}")
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    Ok(BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?))
}

fn metric_fields(m: &Metrics) -> [String; 8] {
    [
        fmt_num(m.bias),
        fmt_num(m.median_bias),
        fmt_num(m.mse),
        fmt_num(m.power),
        fmt_num(m.q05),
        fmt_num(m.q95),
        m.n_selected.to_string(),
        m.undefined.to_string(),
    ]
}

pub fn write_metrics_csv<W: Write>(w: W, rows: &[MetricsRow]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(METRICS_HEADER)?;
    for row in rows {
        let mut rec = vec![
            row.scenario.name().to_string(),
            row.rho.map_or_else(|| "NA".to_string(), fmt_num),
            row.n.to_string(),
            row.estimator.name().to_string(),
            row.scope.name().to_string(),
        ];
        rec.extend(metric_fields(&row.metrics));
        out.write_record(&rec)?;
    }
    out.flush().map_err(|e| Error::io("<metrics>", e))?;
    Ok(())
}

pub fn write_thresholds_csv<W: Write>(w: W, rows: &[ThresholdRow]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record([
        "generator",
        "m",
        "replications",
        "n_undefined",
        "threshold_mean",
        "threshold_sd",
    ])?;
    for r in rows {
        out.write_record([
            r.generator.name().to_string(),
            r.m.to_string(),
            r.replications.to_string(),
            r.n_undefined.to_string(),
            fmt_num(r.threshold_mean),
            fmt_num(r.threshold_sd),
        ])?;
    }
    out.flush().map_err(|e| Error::io("<thresholds>", e))?;
    Ok(())
}

pub fn write_datasets_csv<W: Write>(w: W, rows: &[DatasetRow]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record([
        "dataset",
        "estimator",
        "threshold_r",
        "bias",
        "median_bias",
        "mse",
        "power",
        "q05",
        "q95",
        "n_selected",
        "undefined",
    ])?;
    for r in rows {
        let mut rec = vec![
            r.dataset.to_string(),
            r.estimator.name().to_string(),
            fmt_num(r.threshold_r),
        ];
        rec.extend(metric_fields(&r.metrics));
        out.write_record(&rec)?;
    }
    out.flush().map_err(|e| Error::io("<datasets>", e))?;
    Ok(())
}

pub fn write_bins_csv<W: Write>(w: W, rows: &[BinRow]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record([
        "estimator",
        "r_lo",
        "r_hi",
        "count",
        "bias",
        "mse",
        "bias_q05",
        "bias_q95",
        "mse_q05",
        "mse_q95",
    ])?;
    for r in rows {
        out.write_record([
            r.estimator.name().to_string(),
            fmt_num(r.r_lo),
            fmt_num(r.r_hi),
            r.count.to_string(),
            fmt_num(r.bias),
            fmt_num(r.mse),
            fmt_num(r.bias_q05),
            fmt_num(r.bias_q95),
            fmt_num(r.mse_q05),
            fmt_num(r.mse_q95),
        ])?;
    }
    out.flush().map_err(|e| Error::io("<bins>", e))?;
    Ok(())
}

pub fn write_modes_csv<W: Write>(w: W, rows: &[ModeRow]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["estimator", "bias_mode", "mse_mode"])?;
    for r in rows {
        out.write_record([
            r.estimator.name().to_string(),
            fmt_num(r.bias_mode),
            fmt_num(r.mse_mode),
        ])?;
    }
    out.flush().map_err(|e| Error::io("<modes>", e))?;
    Ok(())
}

/// Writes `rows` with `write` to `path`, creating parent directories.
pub fn write_file<T: ?Sized>(
    path: &Path,
    rows: &T,
    write: impl FnOnce(&mut BufWriter<File>, &T) -> Result<()>,
) -> Result<()> {
    let mut f = create(path)?;
    write(&mut f, rows)?;
    f.flush().map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub scenario: String,
    pub seed: u64,
    pub files: Vec<String>,
    pub notes: Vec<String>,
    pub config: serde_json::Value,
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut f = create(path)?;
    serde_json::to_writer_pretty(&mut f, value)?;
    f.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    f.flush().map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, Serialize)]
pub struct LatticeHeader {
    pub dims: [usize; 3],
    pub units: &'static str,
    pub seed: u64,
    pub has_mask: bool,
    pub config: serde_json::Value,
}

/// Writes `<stem>.csv` (`x,y,z,value[,nonnull]`, x fastest) and
/// `<stem>.json` into `dir`.
pub fn write_lattice(dir: &Path, stem: &str, lattice: &Lattice3D, seed: u64, config: serde_json::Value) -> Result<()> {
    let mask = lattice.nonnull_mask();
    let csv_path = dir.join(format!("{stem}.csv"));
    let mut out = csv::Writer::from_writer(create(&csv_path)?);
    if mask.is_some() {
        out.write_record(["x", "y", "z", "value", "nonnull"])?;
    } else {
        out.write_record(["x", "y", "z", "value"])?;
    }
    for (i, &v) in lattice.values().iter().enumerate() {
        let (x, y, z) = lattice.coords(i);
        let mut rec = vec![x.to_string(), y.to_string(), z.to_string(), fmt_num(v)];
        if let Some(m) = mask {
            rec.push(u8::from(m[i]).to_string());
        }
        out.write_record(&rec)?;
    }
    out.flush().map_err(|e| Error::io(&csv_path, e))?;
    write_json(
        &dir.join(format!("{stem}.json")),
        &LatticeHeader {
            dims: lattice.dims(),
            units: "fisher_z",
            seed,
            has_mask: mask.is_some(),
            config,
        },
    )
}

/// Observation together with its 1-based line in the input.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InputRow {
    pub line: u64,
    pub obs: CorrelationObservation,
}

/// Parses a correlation table.
///
/// The header is `r,n` (per-row sample sizes) or `r` together with
/// `shared_n`. Blank lines and lines starting with `#` are skipped. Errors
/// carry the offending line number.
pub fn read_observations(input: &[u8], shared_n: Option<u32>) -> Result<Vec<InputRow>> {
    // The csv reader reports where it started reading, which may be before
    // skipped blank or comment lines, so the record line is found by
    // skipping those from the reported byte offset.
    let line_of = |pos: &csv::Position| {
        let mut start = (pos.byte() as usize).min(input.len());
        loop {
            let end = input[start..]
                .iter()
                .position(|&b| b == b'\n')
                .map_or(input.len(), |i| start + i);
            let text = String::from_utf8_lossy(&input[start..end]);
            let text = text.trim();
            if end == input.len() || !(text.is_empty() || text.starts_with('#')) {
                break;
            }
            start = end + 1;
        }
        1 + input[..start].iter().filter(|&&b| b == b'\n').count() as u64
    };
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(input);
    let headers = reader.headers().map_err(|e| parse_error(1, e.to_string()))?.clone();
    let col = |name: &str| headers.iter().position(|h| h.eq_ignore_ascii_case(name));
    let header_line = headers.position().map_or(1, line_of);
    let r_col = col("r").ok_or_else(|| parse_error(header_line, "header must contain an `r` column".into()))?;
    let n_col = col("n");
    match (n_col, shared_n) {
        (Some(_), Some(_)) => {
            return Err(parse_error(
                header_line,
                "sample size given both as a column and as --n".into(),
            ));
        }
        (None, None) => {
            return Err(parse_error(
                header_line,
                "no `n` column; pass the shared sample size with --n".into(),
            ));
        }
        _ => {}
    }
    let width = headers.len();
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, line_of);
            parse_error(line, e.to_string())
        })?;
        let line = record.position().map_or(0, line_of);
        if record.len() != width {
            return Err(parse_error(
                line,
                format!("expected {width} fields, found {}", record.len()),
            ));
        }
        let r: f64 = record[r_col]
            .parse()
            .map_err(|_| parse_error(line, format!("invalid r `{}`", &record[r_col])))?;
        let n = match n_col {
            Some(c) => record[c]
                .parse::<u32>()
                .map_err(|_| parse_error(line, format!("invalid n `{}`", &record[c])))?,
            None => shared_n.expect("checked above"),
        };
        let obs = CorrelationObservation::new(r, n).map_err(|e| parse_error(line, e.to_string()))?;
        rows.push(InputRow { line, obs });
    }
    Ok(rows)
}

fn parse_error(line: u64, message: String) -> Error {
    Error::Parse { line, message }
}
