//! `plasmodyn`: simulate, fit and compare the within-host infection models.
//!
//! Exit codes: 0 on success, 2 for configuration errors, 3 for numerical
//! failures. Every failure also prints one machine-readable line on stderr:
//! `error kind=<config|numerical> code=<n> message="..."`.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{Command, ConfigError, RunConfig, Settings};

#[derive(Debug)]
pub enum CliError {
    Config(ConfigError),
    Core(plasmodyn::Error),
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e)
    }
}

impl From<plasmodyn::Error> for CliError {
    fn from(e: plasmodyn::Error) -> Self {
        CliError::Core(e)
    }
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Core(e) if e.is_numerical() => 3,
            _ => 2,
        }
    }

    fn report(&self) -> String {
        let (kind, msg) = match self {
            CliError::Config(e) => ("config", e.to_string()),
            CliError::Core(e) if e.is_numerical() => ("numerical", e.to_string()),
            CliError::Core(e) => ("config", e.to_string()),
        };
        format!("error kind={kind} code={} message={msg:?}", self.code())
    }
}

#[derive(Debug, Parser)]
#[command(name = "plasmodyn", version, about = "Within-host malaria infection models")]
struct Cli {
    /// Flat `key = value` file with the same keys as the long flags.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Debug, Subcommand)]
enum Cmd {
    /// Write hourly trajectories, one CSV per model and K.
    Simulate(Flags),
    /// Fit commitment, inoculum and clearance (and K for the chain) to patient data.
    Fit(Flags),
    /// Relative L² distance between the chain for each K and the age model.
    Compare(Flags),
    /// Two-regime gametocyte–parasitemia regression.
    Regress(Flags),
    /// Probability that an infected cell is still parasitized at a given age.
    Survival(Flags),
    /// Basic reproduction numbers and their factors.
    R0(Flags),
}

#[derive(Debug, Args)]
struct Flags {
    /// ode or pde.
    #[arg(long)]
    model: Option<String>,
    /// Stage counts, e.g. `1,10,50` or `40-60`.
    #[arg(long)]
    k: Option<String>,
    /// Simulated time, e.g. `40d` or `960h`.
    #[arg(long = "t-end")]
    t_end: Option<String>,
    /// Time step (hours unless suffixed).
    #[arg(long)]
    dt: Option<String>,
    /// Age step of the age-structured model.
    #[arg(long)]
    da: Option<String>,
    /// Parameter override `name=value`; repeatable. `--<name> <value>` also works.
    #[arg(long)]
    set: Vec<String>,
    /// Patient manifest.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<String>,
    /// log or linear.
    #[arg(long)]
    objective: Option<String>,
    /// Ages for `survival`, e.g. `24,48`.
    #[arg(long)]
    at: Option<String>,
    /// Regression lag, e.g. `2d`.
    #[arg(long)]
    lag: Option<String>,
    /// Noise coefficient of variation for synthetic `fit` data.
    #[arg(long)]
    noise: Option<String>,
    /// Trajectory CSV for `regress` instead of a fresh simulation.
    #[arg(long)]
    trajectory: Option<PathBuf>,
}

impl From<Flags> for Settings {
    fn from(f: Flags) -> Self {
        Settings {
            model: f.model,
            k: f.k,
            t_end: f.t_end,
            dt: f.dt,
            da: f.da,
            data: f.data,
            out: f.out,
            seed: f.seed,
            objective: f.objective,
            at: f.at,
            lag: f.lag,
            noise: f.noise,
            trajectory: f.trajectory,
            set: f.set,
        }
    }
}

fn run(cli: Cli) -> Result<String, CliError> {
    let file = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| ConfigError(format!("cannot read {}: {e}", path.display())))?;
            Settings::parse_file(&text, path)?
        }
        None => Settings::default(),
    };
    let (command, flags) = match cli.command {
        Cmd::Simulate(f) => (Command::Simulate, f),
        Cmd::Fit(f) => (Command::Fit, f),
        Cmd::Compare(f) => (Command::Compare, f),
        Cmd::Regress(f) => (Command::Regress, f),
        Cmd::Survival(f) => (Command::Survival, f),
        Cmd::R0(f) => (Command::R0, f),
    };
    let cfg = RunConfig::from_settings(command, Settings::from(flags).over(file))?;
    match cfg.command {
        Command::Simulate => commands::simulate(&cfg),
        Command::Fit => commands::fit_patients(&cfg),
        Command::Compare => commands::compare(&cfg),
        Command::Regress => commands::regress(&cfg),
        Command::Survival => commands::survival(&cfg),
        Command::R0 => commands::r0(&cfg),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let args = config::expand_param_flags(std::env::args().collect());
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            let err = CliError::Config(ConfigError(e.kind().to_string()));
            eprintln!("{}", err.report());
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(text) => {
            print!("{text}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", e.report());
            ExitCode::from(e.code())
        }
    }
}
