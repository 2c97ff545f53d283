use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use kyleback_cli::config::{ExperimentConfig, Overrides};
use kyleback_cli::{commands, exit_code, CliError, Outcome};
use kyleback_core::TestName;

/// Simulation and verification of the Kyle-Back equilibrium with an
/// exponential-utility insider and a dynamic signal.
///
/// Exit status: 0 success, 1 failed checks or run errors, 2 usage or
/// configuration errors. Set KYLEBACK_WORKERS to bound the worker threads.
#[derive(Parser)]
#[command(name = "kyleback", version)]
struct Cli {
    /// TOML experiment configuration; defaults apply when omitted.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Master seed.
    #[arg(long, global = true, value_name = "U64")]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Number of Monte Carlo paths.
    #[arg(long, global = true, value_name = "N")]
    paths: Option<usize>,
    /// Number of time steps (grid intervals).
    #[arg(long, global = true, value_name = "N")]
    steps: Option<usize>,
    /// Terminal cutoff: paths stop at 1 - epsilon.
    #[arg(long, global = true, value_name = "FLOAT")]
    epsilon: Option<f64>,
    /// Also write every simulated path (simulate only).
    #[arg(long, global = true)]
    dump_paths: bool,
    /// Restrict verify to these tests (comma separated or repeated).
    #[arg(long, global = true, value_name = "TESTNAME", value_delimiter = ',')]
    only: Vec<TestName>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check the model assumptions.
    Validate,
    /// Simulate equilibrium paths and write per-checkpoint moments.
    Simulate,
    /// Run the verification battery.
    Verify,
    /// Repeat simulate and verify over the [sweep] risk-aversion values.
    Sweep,
    /// Tabulate the transition densities rho and p on a square grid.
    Density {
        #[arg(long)]
        s: Option<f64>,
        #[arg(long)]
        t: Option<f64>,
        #[arg(long)]
        lower: Option<f64>,
        #[arg(long)]
        upper: Option<f64>,
        #[arg(long)]
        points: Option<usize>,
    },
}

fn run(cli: Cli) -> Result<Outcome, CliError> {
    let mut cfg = ExperimentConfig::load(cli.config.as_deref())?;
    cfg.apply(&Overrides {
        seed: cli.seed,
        out: cli.out,
        paths: cli.paths,
        steps: cli.steps,
        epsilon: cli.epsilon,
        only: cli.only,
    });
    cfg.check()?;
    match cli.command {
        Command::Validate => commands::validate(&cfg),
        Command::Simulate => commands::simulate(&cfg, cli.dump_paths),
        Command::Verify => commands::verify(&cfg),
        Command::Sweep => commands::sweep(&cfg),
        Command::Density {
            s,
            t,
            lower,
            upper,
            points,
        } => {
            let mut grid = cfg.verify.density_grid;
            grid.s = s.unwrap_or(grid.s);
            grid.t = t.unwrap_or(grid.t);
            grid.lower = lower.unwrap_or(grid.lower);
            grid.upper = upper.unwrap_or(grid.upper);
            grid.points = points.unwrap_or(grid.points);
            commands::density(&cfg, grid)
        }
    }
}

fn main() -> ExitCode {
    exit_code(run(Cli::parse()))
}
