use std::fs::{self, File};
use std::io::{self, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use selcorr::experiments::Scenario;
use selcorr::io::read_observations;
use selcorr::report::{ccp_svg, estimate_table, write_ccp_csv, write_estimate_csv, EstimateTable};
use selcorr::simulate::{simulate, SimulateOptions};
use selcorr::{Error, Result};
use selcorr_core::SelectionRule;

/// Conditional estimates and confidence intervals for correlations that
/// were selected from the same data.
#[derive(Debug, Parser)]
#[command(name = "selcorr", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Select rows of a correlation table and estimate the selected ones.
    Estimate(TableArgs),
    /// Write calibration plot data (observed r, estimate, CQC band).
    Ccp {
        #[command(flatten)]
        table: TableArgs,
        /// Also render a minimal SVG to this path.
        #[arg(long, value_name = "PATH")]
        svg: Option<PathBuf>,
    },
    /// Run a simulation scenario.
    Simulate(SimulateArgs),
}

#[derive(Debug, Args)]
struct TableArgs {
    /// CSV with header `r,n` or `r` (then pass --n); `-` reads stdin.
    input: PathBuf,
    /// Sample size shared by all rows.
    #[arg(long)]
    n: Option<u32>,
    /// fixed:<c> | bonferroni:<a> | bh:<a>
    #[arg(long)]
    rule: SelectionRule,
    /// Confidence interval level is 1 - alpha.
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// Output path; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    scenario: Scenario,
    /// JSON config; defaults to $SELCORR_CONFIG_DIR/<scenario>.json, then
    /// built-in defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "selcorr-out")]
    out: PathBuf,
    #[arg(long)]
    threads: Option<usize>,
    /// Overrides the replication (or dataset) count.
    #[arg(long)]
    replications: Option<usize>,
}

fn read_table(args: &TableArgs) -> Result<EstimateTable> {
    let mut bytes = Vec::new();
    if args.input == Path::new("-") {
        io::stdin().read_to_end(&mut bytes).map_err(|e| Error::Io {
            path: "<stdin>".into(),
            source: e,
        })?;
    } else {
        bytes = fs::read(&args.input).map_err(|e| Error::Io {
            path: args.input.clone(),
            source: e,
        })?;
    }
    let rows = read_observations(&bytes[..], args.n)?;
    let table = estimate_table(&rows, args.rule, args.alpha)?;
    eprintln!(
        "selected {} of {} rows ({}), {} omitted",
        table.rows.len(),
        table.m,
        args.rule,
        table.m - table.rows.len()
    );
    if table.rows.is_empty() {
        eprintln!("warning: no observations passed the selection rule");
    }
    Ok(table)
}

fn with_output(out: Option<&Path>, f: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<()> {
    match out {
        Some(path) => {
            let file = File::create(path).map_err(|e| Error::Io {
                path: path.into(),
                source: e,
            })?;
            let mut w = BufWriter::new(file);
            f(&mut w)?;
            w.flush().map_err(|e| Error::Io {
                path: path.into(),
                source: e,
            })
        }
        None => {
            let stdout = io::stdout();
            let mut lock = stdout.lock();
            f(&mut lock)
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Estimate(args) => {
            let table = read_table(&args)?;
            with_output(args.out.as_deref(), |w| write_estimate_csv(w, &table))
        }
        Command::Ccp { table: args, svg } => {
            let table = read_table(&args)?;
            with_output(args.out.as_deref(), |w| write_ccp_csv(w, &table))?;
            if let Some(path) = svg {
                fs::write(&path, ccp_svg(&table)).map_err(|e| Error::Io { path, source: e })?;
            }
            Ok(())
        }
        Command::Simulate(args) => {
            let written = simulate(&SimulateOptions {
                scenario: args.scenario,
                config: args.config,
                seed: args.seed,
                replications: args.replications,
                threads: args.threads,
                out_dir: args.out,
            })?;
            for p in written {
                eprintln!("wrote {}", p.display());
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numerical() { 3 } else { 2 })
        }
    }
}
