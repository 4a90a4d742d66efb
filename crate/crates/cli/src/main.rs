//! `osud`: constants, ratio experiments, curves and the verification suite.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use osud_core::verify::VerifyConfig;

use config::{Algorithm, ExperimentConfig, Format};

#[derive(Parser)]
#[command(name = "osud", version, about = "Online selection with uncertain disruption")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print θ*, 1 - 1/e and λ(p) with residuals as CSV.
    Constants {
        /// p values for λ(p).
        #[arg(long, num_args = 1.., default_values_t = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0])]
        p: Vec<f64>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Compute one competitive ratio and check it against its bound.
    Ratio(RatioArgs),
    /// Write the λ-curve, θ_n convergence and η tables as CSV files.
    Curves {
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
        /// p used for the θ_n table.
        #[arg(long, default_value_t = 0.5)]
        p: f64,
    },
    /// Run the acceptance suite.
    Verify {
        /// Reduced Monte Carlo sizes, no determinism sweep.
        #[arg(long)]
        quick: bool,
        /// Corrupt θ* to check that the suite catches it.
        #[arg(long)]
        inject_fault: bool,
        #[arg(long, default_value_t = 0)]
        workers: usize,
        #[arg(long)]
        seed: Option<u64>,
        /// Run only these criteria.
        #[arg(long, num_args = 1..)]
        only: Vec<u8>,
    },
    /// Solve the adaptive schedule and print it as JSON.
    Schedule {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        p: f64,
        #[arg(long, default_value_t = 0.0)]
        zeta: f64,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Tabulate the Hill–Kertz solution y(t) as CSV.
    Ode {
        #[arg(long, default_value_t = 1024)]
        grid: usize,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Solve the finite-support dynamic program for a JSON instance.
    Dp {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

#[derive(Args)]
struct RatioArgs {
    /// JSON config; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    algorithm: Option<Algorithm>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    p: Option<f64>,
    #[arg(long)]
    zeta: Option<f64>,
    /// uniform[:lo,hi] | texp:rate,cap | poly:scale,exp | point:v | discrete:v@prob,... | file:path
    #[arg(long)]
    dist: Option<String>,
    /// Non-i.i.d. instance JSON.
    #[arg(long)]
    instance: Option<PathBuf>,
    /// Fixed quantile; defaults to the algorithm's optimal choice.
    #[arg(long)]
    q: Option<f64>,
    /// Width of the middle level of the hard instance.
    #[arg(long)]
    beta: Option<f64>,
    /// Monte Carlo trials; 0 disables simulation.
    #[arg(long)]
    trials: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long, value_enum)]
    format: Option<Format>,
    #[arg(long)]
    output: Option<PathBuf>,
}

impl RatioArgs {
    fn into_config(self) -> anyhow::Result<ExperimentConfig> {
        let file = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        let flags = ExperimentConfig {
            schema_version: None,
            algorithm: self.algorithm,
            n: self.n,
            p: self.p,
            zeta: self.zeta,
            dist: self.dist,
            instance: self.instance,
            q: self.q,
            beta: self.beta,
            trials: self.trials,
            seed: self.seed,
            workers: self.workers,
            tol: self.tol,
            format: self.format,
            output: self.output,
        };
        Ok(file.overridden_by(flags))
    }
}

/// Exit codes: 1 criterion failure, 2 configuration error, 3 numeric error.
#[derive(Debug)]
pub enum Failure {
    Criteria(String),
    Config(anyhow::Error),
    Numeric(anyhow::Error),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Criteria(_) => 1,
            Failure::Config(_) => 2,
            Failure::Numeric(_) => 3,
        }
    }
}

impl From<osud_core::Error> for Failure {
    fn from(e: osud_core::Error) -> Self {
        match e {
            osud_core::Error::Numeric { .. } => Failure::Numeric(e.into()),
            _ => Failure::Config(e.into()),
        }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Config(e)
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Constants { p, output } => commands::constants(&p, output.as_deref()),
        Command::Ratio(args) => {
            let cfg = args.into_config().map_err(Failure::Config)?;
            let (report, passes) = commands::ratio(&cfg)?;
            if passes {
                Ok(())
            } else {
                Err(Failure::Criteria(format!(
                    "ratio {} misses the {:?} bound {}",
                    report.ratio, report.bound_kind, report.bound
                )))
            }
        }
        Command::Curves { out_dir, p } => commands::curves(&out_dir, p),
        Command::Verify {
            quick,
            inject_fault,
            workers,
            seed,
            only,
        } => {
            let defaults = VerifyConfig::default();
            commands::verify(&VerifyConfig {
                quick,
                workers,
                seed: seed.unwrap_or(defaults.seed),
                inject_fault,
                only,
            })
        }
        Command::Schedule { n, p, zeta, output } => commands::schedule(n, p, zeta, output.as_deref()),
        Command::Ode { grid, output } => commands::ode(grid, output.as_deref()),
        Command::Dp { instance, output } => commands::dp(&instance, output.as_deref()),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            match &f {
                Failure::Criteria(msg) => eprintln!("osud: {msg}"),
                Failure::Config(e) => eprintln!("osud: configuration error: {e:#}"),
                Failure::Numeric(e) => eprintln!("osud: numeric error: {e:#}"),
            }
            ExitCode::from(f.code())
        }
    }
}
