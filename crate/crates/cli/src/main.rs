use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use pinn_spectral::experiments::{
    load_config, run_heat, run_kernel_check, run_spectral, run_toy, write_error_report, HeatExperimentConfig,
    KernelCheckConfig, RunReport, SpectralExperimentConfig, ToyExperimentConfig,
};
use pinn_spectral::{Error, Result};

/// Experiments on infinite-width physics-informed networks.
#[derive(Parser)]
#[command(name = "pinn-spectral", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Half-line toy problem: GPR against the analytic and grid solutions.
    Toy(Io),
    /// Heat equation diagnostics.
    Heat(Io),
    /// Spectral diagnostics for a user-specified operator and grid.
    Spectral(Io),
    /// Monte-Carlo check of the kernel closed forms.
    KernelCheck(Io),
}

#[derive(Args)]
struct Io {
    /// JSON configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

fn configure_threads() -> Result<()> {
    let Ok(v) = std::env::var("PINN_SPECTRAL_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| Error::Config(format!("PINN_SPECTRAL_THREADS must be a positive integer, got {v:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::Config(e.to_string()))?;
    faer::set_global_parallelism(if n == 1 { faer::Par::Seq } else { faer::Par::rayon(n) });
    Ok(())
}

fn run(name: &str, io: &Io) -> Result<RunReport> {
    configure_threads()?;
    match name {
        "toy" => run_toy(&load_config::<ToyExperimentConfig>(&io.config)?, &io.out),
        "heat" => run_heat(&load_config::<HeatExperimentConfig>(&io.config)?, &io.out),
        "spectral" => run_spectral(&load_config::<SpectralExperimentConfig>(&io.config)?, &io.out),
        _ => run_kernel_check(&load_config::<KernelCheckConfig>(&io.config)?, &io.out),
    }
}

fn report_failure(name: &str, out: &Path, err: &Error) {
    eprintln!("pinn-spectral {name}: {err}");
    if let Err(e) = write_error_report(out, name, err) {
        eprintln!("could not write error report: {e}");
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let (name, io) = match &cli.command {
        Command::Toy(io) => ("toy", io),
        Command::Heat(io) => ("heat", io),
        Command::Spectral(io) => ("spectral", io),
        Command::KernelCheck(io) => ("kernel-check", io),
    };
    match run(name, io) {
        Ok(report) => {
            for f in &report.files {
                println!("{}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(err) => {
            report_failure(name, &io.out, &err);
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
