//! `frugal` command-line entry point.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use frugal_gcn::acquisition::Strategy;
use frugal_gcn::config::{ConfigError, ExperimentConfig};
use frugal_gcn::experiments::{self, ExperimentError};
use frugal_gcn::verify;

const EXIT_CONFIG: u8 = 1;
const EXIT_RUNTIME: u8 = 2;
const EXIT_VERIFY: u8 = 3;

#[derive(Parser)]
#[command(name = "frugal", version, about = "Active learning for skeleton-based action recognition")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by the commands that read a config file.
#[derive(clap::Args)]
struct ConfigArgs {
    /// Experiment config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Override `output_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override the dataset root (also read from FRUGAL_DATA_ROOT).
    #[arg(long)]
    data_root: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Fully supervised baseline.
    Train {
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Active-learning grid over strategies and seeds.
    Al {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Run a single strategy instead of the configured list.
        #[arg(long)]
        strategy: Option<Strategy>,
        /// Comma-separated seeds, replacing the configured list.
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
    },
    /// Regularizer ablation (configurations #1..#8).
    Ablate {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
    },
    /// Run the built-in property and oracle checks.
    Verify {
        /// Also load and check a model checkpoint.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Comma-separated subset of checks to run.
        #[arg(long, value_delimiter = ',')]
        only: Option<Vec<String>>,
    },
    /// Re-aggregate tables written by `al` or `ablate`.
    Report {
        #[arg(long = "in")]
        dir: PathBuf,
    },
}

fn load(args: &ConfigArgs) -> Result<ExperimentConfig, ConfigError> {
    let mut cfg = ExperimentConfig::load(&args.config)?;
    cfg.apply_env();
    if let Some(root) = &args.data_root {
        cfg.override_data_root(root.clone());
    }
    if let Some(out) = &args.out {
        cfg.output_dir = out.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn exit_for(err: &ExperimentError) -> u8 {
    match err {
        ExperimentError::Config(_) => EXIT_CONFIG,
        _ => EXIT_RUNTIME,
    }
}

fn run(cli: Cli) -> Result<(), (u8, String)> {
    let config_err = |e: ConfigError| (EXIT_CONFIG, e.to_string());
    let runtime_err = |e: ExperimentError| (exit_for(&e), e.to_string());
    match cli.command {
        Command::Train { cfg } => {
            let cfg = load(&cfg).map_err(config_err)?;
            let out = experiments::cmd_train(&cfg).map_err(runtime_err)?;
            println!(
                "accuracy {:.4}  observed CN {:.4}  km bound {}  ->  {}",
                out.accuracy,
                out.observed_cn,
                out.km_bound.map_or_else(|| "singular".into(), |b| format!("{b:.4e}")),
                cfg.output_dir.display()
            );
        }
        Command::Al { cfg, strategy, seeds } => {
            let cfg = load(&cfg).map_err(config_err)?;
            let strategies = strategy.map(|s| vec![s]);
            experiments::cmd_al(&cfg, strategies.as_deref(), seeds.as_deref()).map_err(runtime_err)?;
            print!("{}", experiments::cmd_report(&cfg.output_dir).map_err(runtime_err)?);
        }
        Command::Ablate { cfg, seeds } => {
            let cfg = load(&cfg).map_err(config_err)?;
            experiments::cmd_ablate(&cfg, seeds.as_deref()).map_err(runtime_err)?;
            print!("{}", experiments::cmd_report(&cfg.output_dir).map_err(runtime_err)?);
        }
        Command::Verify { checkpoint, only } => {
            let report = match &only {
                Some(names) => {
                    let names: Vec<&str> = names.iter().map(String::as_str).collect();
                    verify::run_selected(&names, checkpoint.as_deref())
                }
                None => verify::run_all(checkpoint.as_deref()),
            };
            print!("{}", report.render());
            if !report.passed() {
                return Err((EXIT_VERIFY, format!("failed checks: {}", report.failed().join(", "))));
            }
        }
        Command::Report { dir } => {
            print!("{}", experiments::cmd_report(&dir).map_err(runtime_err)?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            // Help and version requests are not errors; usage errors are
            // reported like config errors.
            return if e.use_stderr() { ExitCode::from(EXIT_CONFIG) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err((code, msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(code)
        }
    }
}
