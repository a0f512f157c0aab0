//! `blowuplab` command-line driver.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use blowuplab_core::Error as CoreError;
use clap::{Parser, Subcommand};

use crate::commands::Ctx;
use crate::config::{ConfigError, RunConfig};

const EXIT_PASS: u8 = 0;
const EXIT_CHECK_FAILED: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_NUMERIC: u8 = 3;

#[derive(Parser)]
#[command(name = "blowuplab", version, about = "Blow-up numerics experiments")]
struct Cli {
    /// TOML configuration with one section per command.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads; 0 uses all cores.
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Seed for sampled grids and random check points.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Integrator relative tolerance (coeffs: pass threshold).
    #[arg(long, global = true)]
    tol: Option<f64>,
    /// Also write gnuplot scripts next to the CSV files.
    #[arg(long, global = true)]
    gnuplot: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Oracle versus closed-form manifold coefficients.
    Coeffs,
    /// One chart-switching passage.
    Passage {
        /// Dump the full report with its itinerary as JSON.
        #[arg(long)]
        itinerary: bool,
    },
    /// Passage grid over mu, eps, k0 with exit-scaling fits.
    Sweep,
    /// Manifold convergence in the truncation level.
    Converge,
    /// Planar limit of chart K2 and the chart-K1 modal identity.
    Pdecheck,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Coeffs => "coeffs",
            Command::Passage { .. } => "passage",
            Command::Sweep => "sweep",
            Command::Converge => "converge",
            Command::Pdecheck => "pdecheck",
        }
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<ConfigError>().is_some() {
        return EXIT_CONFIG;
    }
    match err.downcast_ref::<CoreError>() {
        Some(CoreError::Stiffness { .. } | CoreError::Numeric(_) | CoreError::SingularMap(_)) => EXIT_NUMERIC,
        Some(_) => EXIT_CONFIG,
        None => EXIT_NUMERIC,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = (|| -> anyhow::Result<bool> {
        let cfg = RunConfig::load(cli.config.as_deref())?;
        if let Some(t) = cli.tol {
            if t.is_nan() || t <= 0.0 {
                return Err(ConfigError(format!("--tol must be positive, got {t}")).into());
            }
        }
        rayon::ThreadPoolBuilder::new().num_threads(cli.jobs).build_global()?;
        let ctx = Ctx {
            out: cli.out.clone(),
            seed: cli.seed,
            tol: cli.tol,
            gnuplot: cli.gnuplot,
            itinerary: matches!(cli.command, Command::Passage { itinerary: true }),
        };
        commands::run(cli.command.name(), &cfg, &ctx)
    })();
    match result {
        Ok(true) => ExitCode::from(EXIT_PASS),
        Ok(false) => ExitCode::from(EXIT_CHECK_FAILED),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
