//! Command-line entry point. See the crate README for the config schema.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use gsc::commands::{self, EXIT_CONFIG};
use gsc::config::{load_config, RunConfig};
use gsc::GscError;

#[derive(Parser)]
#[command(name = "gsc", about = "Harmony optimization and sampling over filler/role structures")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct CommonArgs {
    /// Path to the JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Number of worker threads (default: all cores).
    #[arg(long)]
    jobs: Option<usize>,
    /// Directory for reports and CSV artifacts (default: current directory).
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Replace the seed from the config file.
    #[arg(long)]
    seed_override: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Run trajectories and report which grid structure each one reached.
    Optimize(CommonArgs),
    /// Run trajectories and compare quantized finals to the Boltzmann
    /// distribution.
    Sample(CommonArgs),
    /// Repeat optimize or sample while varying one scalar (q, T, c, dt).
    Sweep(CommonArgs),
    /// Cross-check analytic gradients and oracle predictions.
    Verify(CommonArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let args = match &cli.command {
        Command::Optimize(a) | Command::Sample(a) | Command::Sweep(a) | Command::Verify(a) => a,
    };

    if let Some(jobs) = args.jobs {
        // Ignore the error if a global pool already exists.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global();
    }

    let mut cfg = match load_config(&args.config) {
        Ok(cfg) => cfg,
        Err(e) => {
            report_config_error(&e);
            return ExitCode::from(EXIT_CONFIG as u8);
        }
    };
    for w in &cfg.warnings {
        eprintln!("warning: {w}");
    }
    if let Some(seed) = args.seed_override {
        cfg.sde.seed = seed;
    }

    let result = dispatch(&cli.command, &cfg, &args.out);
    match result {
        Ok(code) => ExitCode::from(code as u8),
        Err(e @ (GscError::ValidationError(_) | GscError::InvalidSpec(_))) => {
            report_config_error(&e);
            ExitCode::from(EXIT_CONFIG as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(commands::EXIT_NUMERICAL as u8)
        }
    }
}

fn dispatch(command: &Command, cfg: &RunConfig, out: &std::path::Path) -> gsc::Result<i32> {
    match command {
        Command::Optimize(_) => {
            let (code, report) = commands::cmd_optimize(cfg, out)?;
            println!(
                "optimize: {} runs, {} failed, modal outcome {}",
                report.n_runs,
                report.n_failed,
                report.modal_outcome.as_deref().unwrap_or("(none)")
            );
            if let Some(s) = &report.success {
                println!(
                    "success: {}/{} = {:.3} (95% Wilson [{:.3}, {:.3}])",
                    s.successes, s.n, s.fraction, s.wilson_low, s.wilson_high
                );
            }
            Ok(code)
        }
        Command::Sample(_) => {
            let (code, report) = commands::cmd_sample(cfg, out)?;
            println!(
                "sample: {} runs, {} failed, TV = {:.4}, outside fraction = {:.4} at T = {}",
                report.n_runs,
                report.n_failed,
                report.verdict.tv,
                report.verdict.outside_fraction,
                report.comparison_temperature
            );
            Ok(code)
        }
        Command::Sweep(_) => {
            let (code, rows) = commands::cmd_sweep(cfg, out)?;
            for row in &rows {
                println!("sweep {} = {}: {}", row.axis, row.value, row.status);
            }
            Ok(code)
        }
        Command::Verify(_) => {
            let (code, report) = commands::cmd_verify(cfg, out)?;
            for check in &report.checks {
                println!(
                    "{} {} ({})",
                    if check.passed { "PASS" } else { "FAIL" },
                    check.name,
                    check.detail
                );
            }
            Ok(code)
        }
    }
}

fn report_config_error(e: &GscError) {
    match e {
        GscError::ValidationError(errs) => {
            eprintln!("configuration errors:");
            for err in errs {
                eprintln!("  {err}");
            }
        }
        other => eprintln!("configuration error: {other}"),
    }
}
