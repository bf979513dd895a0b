use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use leakage_cli::config::BackendKind;
use leakage_cli::{cmd_audit, cmd_report, cmd_sweep, cmd_transform, write_sweep_csv};
use leakage_cli::{AuditError, Overrides, RunConfig, Stage};

/// Measure how much a text transformation reduces sensitive-attribute
/// leakage in a review corpus.
#[derive(Parser)]
#[command(name = "leakage-audit", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// JSON run configuration; built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Run with this single seed instead of the configured list.
    #[arg(long)]
    seed: Option<u64>,
    /// Only use cached transformations or offline backends.
    #[arg(long)]
    offline: bool,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    /// identity, rule, chat or lookup.
    #[arg(long)]
    backend: Option<BackendKind>,
    #[arg(long)]
    sample_per_group: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Full audit; writes a run directory with report.json, report.md,
    /// rankings.csv, sentiment.csv and manifest.json.
    Audit(Common),
    /// Accuracy against sample size on original text.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Total sample sizes; the config's sweep.sizes when omitted.
        #[arg(long, value_delimiter = ',')]
        sizes: Vec<usize>,
        /// Output CSV; `<output_dir>/sweep.csv` when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fill the transformation cache for every sampled document.
    Transform(Common),
    /// Validate a stored run and print its Markdown report.
    Report { run_dir: PathBuf },
}

fn load(common: &Common) -> Result<RunConfig, AuditError> {
    let mut config = match &common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    config.apply(&Overrides {
        seed: common.seed,
        offline: common.offline,
        output_dir: common.output_dir.clone(),
        backend: common.backend,
        sample_per_group: common.sample_per_group,
    });
    config.validate()?;
    Ok(config)
}

fn run(cli: Cli) -> Result<(), AuditError> {
    match cli.command {
        Command::Audit(common) => {
            let outcome = cmd_audit(&load(&common)?)?;
            for s in &outcome.report.summary {
                println!(
                    "{}: accuracy {:.3} -> {:.3} (drop {:.3}), McNemar significant in {}/{} seeds",
                    s.model,
                    s.original_mean.accuracy,
                    s.transformed_mean.accuracy,
                    s.mean_accuracy_delta,
                    s.significant_runs,
                    outcome.report.runs.len()
                );
            }
            println!("{}", outcome.run_dir.display());
        }
        Command::Sweep { common, sizes, out } => {
            let config = load(&common)?;
            let sizes = if sizes.is_empty() {
                config.sweep.sizes.clone()
            } else {
                sizes
            };
            let rows = cmd_sweep(&config, &sizes)?;
            let path = out.unwrap_or_else(|| config.output_dir.join("sweep.csv"));
            if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
                std::fs::create_dir_all(parent)
                    .map_err(|e| AuditError::internal(Stage::Report, e.to_string()))?;
            }
            let file = std::fs::File::create(&path)
                .map_err(|e| AuditError::internal(Stage::Report, e.to_string()))?;
            write_sweep_csv(&rows, file)?;
            write_sweep_csv(&rows, std::io::stdout())?;
        }
        Command::Transform(common) => {
            let s = cmd_transform(&load(&common)?)?;
            println!(
                "{} documents ({} cached, {} backend calls, {} flagged) -> {}",
                s.documents,
                s.cache_hits,
                s.backend_calls,
                s.flagged.len(),
                s.output.display()
            );
        }
        Command::Report { run_dir } => print!("{}", cmd_report(&run_dir)?),
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
