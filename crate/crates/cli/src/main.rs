//! Experiment driver. Exit codes: 0 on success, 2 when the run finished but
//! an assertion-class property failed, 1 on configuration or I/O errors.

use clap::{Args, Parser, Subcommand};
use relax_cli::config::{ExperimentConfig, ExperimentKind};
use relax_cli::report::ExportFormat;
use relax_cli::runner::run;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "relax",
    version,
    about = "Envelope and dimension-reduction experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment config (TOML). Defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Write the report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// csv | text
    #[arg(long, default_value = "csv")]
    format: String,
    /// Override the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the config evaluation budget.
    #[arg(long)]
    budget: Option<usize>,
    /// Pin the worker thread count (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Envelope estimates (and optional lamination chains) per sample.
    Envelope(Common),
    /// Reduced density and membrane estimates per planar gradient.
    Membrane(Common),
    /// Two-route reduce/relax consistency diagnostic.
    Identity(Common),
    /// Film-energy sandwich over a thickness schedule.
    Thinfilm(Common),
    /// Inf/integral interchange gap table.
    Interchange(Common),
    /// Growth-constant audit of the estimator.
    Growth(Common),
    /// Monotone approximation family sweep.
    Family(Common),
}

impl Command {
    fn split(self) -> (ExperimentKind, Common) {
        match self {
            Command::Envelope(c) => (ExperimentKind::Envelope, c),
            Command::Membrane(c) => (ExperimentKind::Membrane, c),
            Command::Identity(c) => (ExperimentKind::Identity, c),
            Command::Thinfilm(c) => (ExperimentKind::Thinfilm, c),
            Command::Interchange(c) => (ExperimentKind::Interchange, c),
            Command::Growth(c) => (ExperimentKind::Growth, c),
            Command::Family(c) => (ExperimentKind::Family, c),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (kind, common) = cli.command.split();
    match execute(kind, &common) {
        Ok(failures) => {
            if failures == 0 {
                ExitCode::SUCCESS
            } else {
                eprintln!("relax: {failures} property failure(s)");
                ExitCode::from(2)
            }
        }
        Err(e) => {
            eprintln!("relax: error: {e}");
            ExitCode::from(1)
        }
    }
}

fn execute(kind: ExperimentKind, common: &Common) -> Result<usize, Box<dyn std::error::Error>> {
    #[cfg(feature = "parallel")]
    if let Some(threads) = common.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .ok();
    }
    #[cfg(not(feature = "parallel"))]
    if common.threads.is_some() {
        eprintln!("relax: built without the parallel feature; --threads ignored");
    }

    let mut config = match &common.config {
        Some(path) => ExperimentConfig::from_path(path)?,
        None => ExperimentConfig::default_for(kind),
    };
    if let Some(expected) = config.experiment {
        if expected != kind {
            return Err(format!(
                "config is for '{expected}' but the '{kind}' subcommand was invoked"
            )
            .into());
        }
    }
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    if let Some(budget) = common.budget {
        config.budget = budget;
    }
    let format = match common.format.as_str() {
        "csv" => ExportFormat::Csv,
        "text" => ExportFormat::Text,
        other => return Err(format!("unknown format '{other}'").into()),
    };

    let report = run(kind, &config)?;
    eprintln!(
        "relax: {} finished in {:.3}s ({} rows)",
        kind,
        report.wall_clock.as_secs_f64(),
        report.rows.len()
    );
    let body = report.export(format);
    match &common.out {
        Some(path) => std::fs::write(path, body)?,
        None => print!("{body}"),
    }
    Ok(report.property_failures)
}
