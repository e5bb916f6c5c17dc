use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand, ValueEnum};
use pulsenet::harness::{
    run_scenario, sweep_aggregation, write_sweep_csv, write_sweep_table, ConfigError, ScenarioConfig, ScenarioError,
};

const EXIT_CONFIG: u8 = 1;
const EXIT_INVARIANT: u8 = 2;
const EXIT_DROPS: u8 = 3;

#[derive(Parser)]
#[command(name = "pulsenet", version, about = "Inter-chip spike routing simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write its report.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the seed in the config.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides the run duration, in ns.
        #[arg(long)]
        duration: Option<u64>,
        /// Report directory; defaults to `output_dir` from the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a scenario once per parameter value and tabulate the results.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum)]
        param: SweepParam,
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<u16>,
        /// CSV path; the table goes to stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check a config without running it.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Copy, Clone, ValueEnum)]
enum SweepParam {
    #[value(name = "bucket_capacity")]
    BucketCapacity,
}

/// Error carrying the exit status it maps to.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure {
            code: EXIT_CONFIG,
            error: e.into(),
        }
    }
}

impl From<ScenarioError> for Failure {
    fn from(e: ScenarioError) -> Self {
        let code = match e {
            ScenarioError::Config(_) => EXIT_CONFIG,
            _ => EXIT_INVARIANT,
        };
        Failure {
            code,
            error: e.into(),
        }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(error: anyhow::Error) -> Self {
        Failure {
            code: EXIT_INVARIANT,
            error,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}

fn execute(command: Command) -> Result<u8, Failure> {
    match command {
        Command::Run {
            config,
            seed,
            duration,
            out,
        } => {
            let mut cfg = ScenarioConfig::load(&config)?;
            if let Some(seed) = seed {
                cfg.seed = seed;
            }
            if let Some(d) = duration {
                cfg.duration_ns = d;
            }
            run(&cfg, out.or_else(|| cfg.output_dir.as_ref().map(PathBuf::from)))
        }
        Command::Sweep {
            config,
            param: SweepParam::BucketCapacity,
            values,
            out,
        } => {
            let cfg = ScenarioConfig::load(&config)?;
            if values.contains(&0) {
                return Err(ConfigError::Invalid(vec![pulsenet::harness::Diagnostic {
                    path: "--values".into(),
                    message: "bucket capacity must be ≥1".into(),
                }])
                .into());
            }
            let rows = sweep_aggregation(&cfg, &values)?;
            match out {
                Some(path) => {
                    write_sweep_csv(&path, &rows)
                        .with_context(|| format!("writing {}", path.display()))?;
                    println!("wrote {} rows to {}", rows.len(), path.display());
                }
                None => {
                    write_sweep_table(std::io::stdout().lock(), &rows)
                        .context("writing sweep table")?;
                }
            }
            Ok(0)
        }
        Command::Validate { config } => {
            let cfg = ScenarioConfig::load(&config)?;
            cfg.validate()?;
            println!("{}: ok", config.display());
            Ok(0)
        }
    }
}

fn run(cfg: &ScenarioConfig, out: Option<PathBuf>) -> Result<u8, Failure> {
    let outcome = run_scenario(cfg)?;
    let report = &outcome.report;
    if let Some(dir) = &out {
        write_report(report, dir)?;
    }
    let mean = report
        .latency
        .mean_ns
        .map_or("n/a".to_string(), |m| format!("{m:.3} ns"));
    println!(
        "{}: seed {} emitted {} delivered {} dropped {} mean latency {}",
        report.scenario,
        report.seed,
        report.totals.source_emissions,
        report.totals.deliveries,
        report.totals.dropped,
        mean
    );
    if report.exceeds_drop_limit(cfg.max_drop_fraction) {
        eprintln!(
            "drop fraction {:.6} exceeds limit {}",
            report.totals.drop_fraction,
            cfg.max_drop_fraction.unwrap_or_default()
        );
        return Ok(EXIT_DROPS);
    }
    Ok(0)
}

fn write_report(report: &pulsenet::harness::MetricsReport, dir: &Path) -> anyhow::Result<()> {
    report
        .write_to(dir)
        .with_context(|| format!("writing report to {}", dir.display()))
}
