use std::fs;
use std::io::Write;
use std::path::Path;
use std::process::{Command, Output, Stdio};

use selcorr::io::METRICS_HEADER;
use selcorr_core::correlation::{cqc_interval, CorrelationObservation};

fn selcorr(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_selcorr")).args(args).output().unwrap()
}

fn selcorr_stdin(args: &[&str], input: &str) -> Output {
    let mut child = Command::new(env!("CARGO_BIN_EXE_selcorr"))
        .args(args)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    child.stdin.take().unwrap().write_all(input.as_bytes()).unwrap();
    child.wait_with_output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

/// Parses a CSV with a header row into column names and numeric rows.
fn parse_csv(text: &str) -> (Vec<String>, Vec<Vec<f64>>) {
    let mut lines = text.lines().filter(|l| !l.starts_with('#') && !l.is_empty());
    let header = lines.next().unwrap().split(',').map(String::from).collect();
    let rows = lines
        .map(|l| l.split(',').map(|v| v.parse::<f64>().unwrap()).collect())
        .collect();
    (header, rows)
}

fn col(header: &[String], name: &str) -> usize {
    header
        .iter()
        .position(|h| h == name)
        .unwrap_or_else(|| panic!("no column {name}"))
}

/// Sixteen-subject table: eight strong rows and twenty weak ones.
fn region_table() -> String {
    let mut s = String::from("# regions\nr\n");
    for r in [0.86, 0.81, 0.78, 0.91, 0.75, 0.83, 0.88, 0.79] {
        s += &format!("{r}\n");
    }
    for i in 0..20 {
        s += &format!("{}\n", -0.3 + 0.03 * i as f64);
    }
    s
}

#[test]
fn estimate_selects_strong_rows_and_shrinks() {
    let o = selcorr_stdin(&["estimate", "-", "--n", "16", "--rule", "bh:0.1"], &region_table());
    assert!(o.status.success(), "{}", stderr(&o));
    let (h, rows) = parse_csv(&stdout(&o));
    assert_eq!(rows.len(), 8);
    let (r, rho) = (col(&h, "r"), col(&h, "rho_hat"));
    let (lo, hi) = (col(&h, "ci_lo"), col(&h, "ci_hi"));
    for row in &rows {
        assert!(row[rho].abs() <= row[r].abs());
        assert!(row[lo] <= row[rho] && row[rho] <= row[hi]);
    }
    assert!(stderr(&o).contains("20 omitted"));
}

#[test]
fn far_from_threshold_estimate_matches_direct() {
    let o = selcorr_stdin(&["estimate", "-", "--rule", "fixed:0.6"], "r,n\n0.9,20\n");
    assert!(o.status.success());
    let (h, rows) = parse_csv(&stdout(&o));
    assert_eq!(rows.len(), 1);
    assert!((rows[0][col(&h, "rho_hat")] - 0.9).abs() < 0.02);
}

#[test]
fn unit_correlation_is_rejected_with_line_number() {
    let o = selcorr_stdin(&["estimate", "-", "--rule", "fixed:0.6"], "r,n\n0.7,20\n\n1.0,20\n");
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 4"), "{}", stderr(&o));
}

#[test]
fn unparsable_value_exits_2() {
    let o = selcorr_stdin(&["estimate", "-", "--n", "20", "--rule", "bh:0.1"], "r\n0.5\nabc\n");
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 3"), "{}", stderr(&o));
}

#[test]
fn empty_selection_succeeds_with_warning() {
    let o = selcorr_stdin(&["estimate", "-", "--n", "20", "--rule", "fixed:0.9"], "r\n0.1\n-0.2\n");
    assert!(o.status.success());
    let (_, rows) = parse_csv(&stdout(&o));
    assert!(rows.is_empty());
    assert!(stderr(&o).contains("warning"));
}

#[test]
fn missing_file_exits_2() {
    let o = selcorr(&["estimate", "/nonexistent/table.csv", "--n", "20", "--rule", "bh:0.1"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn unknown_scenario_lists_valid_names() {
    let o = selcorr(&["simulate", "no-such-scenario"]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    for name in ["fixed-threshold", "mixture-grf", "fmri-like", "bh-convergence"] {
        assert!(err.contains(name), "{err}");
    }
}

#[test]
fn ccp_is_monotone_and_keeps_the_boundary_row() {
    let mut input = String::from("r\n0.6\n");
    for i in 0..15 {
        input += &format!("{}\n", 0.61 + 0.02 * i as f64);
    }
    input += "0.3\n-0.1\n";
    let dir = tempfile::tempdir().unwrap();
    let svg = dir.path().join("ccp.svg");
    let o = selcorr_stdin(
        &[
            "ccp",
            "-",
            "--n",
            "25",
            "--rule",
            "fixed:0.6",
            "--svg",
            svg.to_str().unwrap(),
        ],
        &input,
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.starts_with("# rule"));
    let (h, rows) = parse_csv(&text);
    assert_eq!(h, ["observed_r", "rho_hat", "ci_lo", "ci_hi"]);
    assert_eq!(rows.len(), 16);
    assert_eq!(rows[0][0], 0.6);
    for w in rows.windows(2) {
        assert!(w[1][0] > w[0][0] && w[1][1] > w[0][1]);
    }
    assert!(rows.iter().all(|r| r[2] <= r[3]));
    assert!(fs::read_to_string(&svg).unwrap().starts_with("<svg"));
}

#[test]
fn csv_numbers_round_trip() {
    let o = selcorr_stdin(
        &["estimate", "-", "--rule", "fixed:0.5"],
        "r,n\n0.63,30\n0.7123,45\n-0.58,25\n",
    );
    assert!(o.status.success());
    let (h, rows) = parse_csv(&stdout(&o));
    for row in rows {
        let obs = CorrelationObservation::new(row[col(&h, "r")], row[col(&h, "n")] as u32).unwrap();
        let (lo, hi) = cqc_interval(&obs, 0.5, 0.05).unwrap();
        for (got, want) in [(row[col(&h, "ci_lo")], lo), (row[col(&h, "ci_hi")], hi)] {
            assert!((got - want).abs() <= 1e-6, "{got} vs {want}");
        }
    }
}

fn write_config(dir: &Path, name: &str, json: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, json).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn simulate_fixed_threshold_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "c.json",
        r#"{"replications": 500, "sample_sizes": [10, 50]}"#,
    );
    let run = |out: &str| {
        let out = dir.path().join(out);
        let o = selcorr(&[
            "simulate",
            "fixed-threshold",
            "--config",
            &cfg,
            "--seed",
            "7",
            "--out",
            out.to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
        (
            fs::read(out.join("metrics.csv")).unwrap(),
            fs::read(out.join("manifest.json")).unwrap(),
        )
    };
    assert_eq!(run("a"), run("b"));
}

#[test]
fn simulate_mixture_schema() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("m");
    let o = selcorr(&[
        "simulate",
        "mixture-grf",
        "--replications",
        "5",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = fs::read_to_string(out.join("metrics.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), METRICS_HEADER.join(","));
    assert_eq!(
        METRICS_HEADER,
        [
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
            "undefined"
        ]
    );
    for l in lines {
        let f: Vec<&str> = l.split(',').collect();
        assert_eq!(f.len(), 13);
        assert_eq!(f[0], "mixture-grf");
        assert!(["direct", "conditional", "split5050"].contains(&f[3]));
    }
    let manifest: serde_json::Value = serde_json::from_slice(&fs::read(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["scenario"], "mixture-grf");
    assert_eq!(manifest["config"]["replications"], 5);
}

#[test]
fn simulate_bh_threshold_sd_decreases() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "bh.json",
        r#"{"ms": [100, 1000, 10000], "generators": ["independent"], "replications": 100}"#,
    );
    let out = dir.path().join("bh");
    let o = selcorr(&[
        "simulate",
        "bh-convergence",
        "--config",
        &cfg,
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = fs::read_to_string(out.join("bh_thresholds.csv")).unwrap();
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let sd = header.iter().position(|&h| h == "threshold_sd").unwrap();
    let sds: Vec<f64> = lines.map(|l| l.split(',').nth(sd).unwrap().parse().unwrap()).collect();
    assert_eq!(sds.len(), 3);
    assert!(sds.windows(2).all(|w| w[1] < w[0]), "{sds:?}");
}

#[test]
fn config_directory_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    write_config(
        dir.path(),
        "fixed-threshold.json",
        r#"{"replications": 50, "rhos": [0.5], "sample_sizes": [20]}"#,
    );
    let out = dir.path().join("o");
    let o = Command::new(env!("CARGO_BIN_EXE_selcorr"))
        .args(["simulate", "fixed-threshold", "--out", out.to_str().unwrap()])
        .env("SELCORR_CONFIG_DIR", dir.path())
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    let text = fs::read_to_string(out.join("metrics.csv")).unwrap();
    // One (rho, n) cell, three estimators, two scopes.
    assert_eq!(text.lines().count(), 1 + 6);
}

#[test]
fn bad_config_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", r#"{"replications": 0}"#);
    let out = dir.path().join("o");
    let o = selcorr(&[
        "simulate",
        "fixed-threshold",
        "--config",
        &cfg,
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
    let cfg = write_config(dir.path(), "d.json", r#"{"replicates": 10}"#);
    let o = selcorr(&[
        "simulate",
        "fixed-threshold",
        "--config",
        &cfg,
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
}
