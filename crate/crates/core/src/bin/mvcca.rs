//! Command-line front end for the experiment harness.
//!
//! Every run is driven by a JSON config; the subcommand must match the
//! config's `experiment` field so a config cannot be run as the wrong
//! experiment by accident. Exit codes: 0 on success, 2 for config or
//! input errors, 3 for numeric failures, 4 when `--assert` is set and the
//! run's acceptance summary is false.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use mvcca_core::harness::{emit, run_experiment, ExperimentConfig, ExperimentKind, OutputFormat};
use mvcca_core::{Error, Result};

#[derive(Parser)]
#[command(
    name = "mvcca",
    about = "Multi-view CCA subspace recovery experiments",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Convergence-rate sweep over a sample-size grid
    Rate(RunArgs),
    /// Spectral-dominance ablation over a ratio grid
    Dominance(RunArgs),
    /// Repeated-trial intersection recovery with bound checks
    Intersection(RunArgs),
    /// Hermite quadrature and cross-moment certification
    HermiteCert(RunArgs),
    /// Generator invariance and round-trip inversion check
    Invariance(RunArgs),
    /// Single-config subspace estimation
    Estimate(RunArgs),
    /// Population spectrum construction fidelity table
    ConstructSpectrum(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// JSON experiment config
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    /// Override the config's seed before hashing and running
    #[arg(long, value_name = "U64")]
    seed: Option<u64>,
    /// Directory for emitted artifacts
    #[arg(long, value_name = "DIR", default_value = ".")]
    out: PathBuf,
    /// Size of the worker pool (default: all cores)
    #[arg(long, value_name = "COUNT")]
    threads: Option<usize>,
    /// Emit only this format instead of both csv and json
    #[arg(long, value_name = "csv|json")]
    format: Option<OutputFormat>,
    /// Exit 4 unless the run's acceptance summary passes
    #[arg(long)]
    assert: bool,
}

impl Command {
    fn expected_kind(&self) -> ExperimentKind {
        match self {
            Command::Rate(_) => ExperimentKind::Rate,
            Command::Dominance(_) => ExperimentKind::Dominance,
            Command::Intersection(_) => ExperimentKind::Intersection,
            Command::HermiteCert(_) => ExperimentKind::HermiteCert,
            Command::Invariance(_) => ExperimentKind::Invariance,
            Command::Estimate(_) => ExperimentKind::Estimate,
            Command::ConstructSpectrum(_) => ExperimentKind::ConstructSpectrum,
        }
    }

    fn args(&self) -> &RunArgs {
        match self {
            Command::Rate(a)
            | Command::Dominance(a)
            | Command::Intersection(a)
            | Command::HermiteCert(a)
            | Command::Invariance(a)
            | Command::Estimate(a)
            | Command::ConstructSpectrum(a) => a,
        }
    }
}

fn run(command: &Command) -> Result<bool> {
    let args = command.args();
    let mut config = ExperimentConfig::load(&args.config)?;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if config.experiment != command.expected_kind() {
        return Err(Error::Config(format!(
            "config selects experiment '{}', invoked subcommand expects '{}'",
            config.experiment,
            command.expected_kind()
        )));
    }
    if let Some(threads) = args.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
    }

    let record = run_experiment(&config)?;

    let formats: &[OutputFormat] = match args.format {
        Some(f) => &[f][..],
        None => &[OutputFormat::Csv, OutputFormat::Json],
    };
    let formats = formats.to_vec();
    for format in formats {
        let path = args
            .out
            .join(format!("{}.{}", config.output_stem, format.extension()));
        emit(&record, format, &path)?;
        println!("wrote {}", path.display());
    }

    println!(
        "{}: {} rows in {:.2?} (config {})",
        record.experiment,
        record.rows.len(),
        record.wall_time,
        &record.config_hash[..12]
    );
    let mut keys: Vec<&String> = record.summary.keys().collect();
    keys.sort();
    for key in keys {
        println!("  {key} = {}", record.summary[key].csv_token());
    }

    Ok(record.assert_ok().unwrap_or(true))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli.command) {
        Ok(passed) => {
            if cli.command.args().assert && !passed {
                eprintln!("assertion failed: acceptance summary is false");
                ExitCode::from(4)
            } else {
                ExitCode::SUCCESS
            }
        }
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
