//! Runs a scenario file and writes survival, spread and bond-price series.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use switchcredit::scenario::{run_scenario, Overrides, OutputFormat, BUNDLED};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Svg,
    Both,
}

impl From<Format> for OutputFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Csv => Self::Csv,
            Format::Svg => Self::Svg,
            Format::Both => Self::Both,
        }
    }
}

/// Conditional survival, credit spreads and bond prices under a random,
/// switching default barrier.
///
/// Exit status: 0 success, 1 I/O error, 2 configuration error, 3 numerical failure
/// (some rows did not converge or could not be evaluated).
#[derive(Debug, Parser)]
#[command(name = "switchcredit", version)]
struct Args {
    /// Scenario JSON file, or the name of a bundled scenario.
    #[arg(long, value_name = "PATH", required_unless_present = "list")]
    config: Option<PathBuf>,

    /// Output directory.
    #[arg(long, value_name = "DIR", default_value = "out")]
    out: PathBuf,

    /// Seed for the simulated path and the oracle.
    #[arg(long, value_name = "N")]
    seed: Option<u64>,

    /// Absolute and relative quadrature tolerance.
    #[arg(long = "tol-quad", value_name = "X")]
    tol_quad: Option<f64>,

    /// Monte Carlo samples per oracle estimate.
    #[arg(long, value_name = "N")]
    paths: Option<usize>,

    /// Attach oracle estimates and z-scores to a few rows of every series.
    #[arg(long)]
    validate: bool,

    #[arg(long, value_enum, default_value = "csv")]
    format: Format,

    /// Print the bundled scenario names and exit.
    #[arg(long)]
    list: bool,

    /// Suppress progress lines.
    #[arg(long, short)]
    quiet: bool,
}

fn main() -> ExitCode {
    let args = Args::parse();
    if args.list {
        for (name, _) in BUNDLED {
            println!("{name}");
        }
        return ExitCode::SUCCESS;
    }
    let config = args.config.expect("clap enforces --config");
    let overrides = Overrides {
        seed: args.seed,
        quad_tol: args.tol_quad,
        oracle_samples: args.paths,
        validate: args.validate,
        format: args.format.into(),
    };
    let quiet = args.quiet;
    let log = move |line: &str| {
        if !quiet {
            eprintln!("{line}");
        }
    };
    match run_scenario(&config, &args.out, &overrides, &log) {
        Ok(summary) => {
            for w in &summary.evaluation.warnings {
                eprintln!("warning: {w}");
            }
            for f in &summary.files {
                println!("{}", f.display());
            }
            let failures = summary.numerical_failures();
            if failures > 0 {
                eprintln!("error: {failures} rows failed numerically");
            }
            ExitCode::from(summary.exit_code() as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
