//! Command-line front end for the detectability toolbox.
//!
//! Every run reads one TOML configuration describing a system and exactly
//! one task, writes a JSON report plus CSV artifacts into the output
//! directory, and exits with 0 (holds/success), 2 (falsified, witness
//! written), or 1 (usage or validation error).

mod config;
mod tasks;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use config::RunConfig;

#[derive(Parser)]
#[command(
    name = "ioss",
    about = "Detectability numerics: simulate, check, certify, observe",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct CommonArgs {
    /// Path to the TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Override the battery seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory for reports and CSV artifacts.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Override the integrator relative tolerance.
    #[arg(long)]
    tolerance: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate a trajectory and export it as CSV.
    Simulate(CommonArgs),
    /// Run a stability-estimate check over a seeded battery.
    Check(CommonArgs),
    /// Verify a dissipation inequality on a grid.
    Lyapunov(CommonArgs),
    /// Hurwitz test, certificate synthesis, or detectability analysis.
    Linear(CommonArgs),
    /// Build a norm estimator and run it coupled to the plant.
    Observe(CommonArgs),
    /// Grid value iteration and optional inf-convolution smoothing.
    Valuefn(CommonArgs),
    /// Re-run a recorded witness at tighter tolerance.
    Replay {
        /// Path to a witness bundle written by a falsified check.
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Tolerance tightening factor for the replay.
        #[arg(long, default_value_t = 10.0)]
        tolerance: f64,
    },
}

fn load(args: &CommonArgs, expected: &'static str) -> Result<RunConfig> {
    let text = std::fs::read_to_string(&args.config)
        .with_context(|| format!("reading {}", args.config.display()))?;
    let config = RunConfig::parse(&text)?;
    if config.task_name() != expected {
        anyhow::bail!(
            "config declares task `{}` but the `{expected}` subcommand was invoked",
            config.task_name()
        );
    }
    Ok(config)
}

fn resolve_out_dir(args_out: &PathBuf, config: Option<&RunConfig>) -> Result<PathBuf> {
    let dir = match config.and_then(|c| c.output.as_ref()).and_then(|o| o.dir.as_ref()) {
        // --out wins unless it is the default and the config names a dir
        Some(cfg_dir) if args_out == &PathBuf::from("out") => PathBuf::from(cfg_dir),
        _ => args_out.clone(),
    };
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir)
}

fn dispatch() -> Result<tasks::TaskOutcome> {
    let cli = Cli::parse();
    match &cli.command {
        Command::Simulate(args) => {
            let config = load(args, "simulate")?;
            let out = resolve_out_dir(&args.out, Some(&config))?;
            tasks::run_simulate(&config, &out, args.tolerance)
        }
        Command::Check(args) => {
            let config = load(args, "check")?;
            let out = resolve_out_dir(&args.out, Some(&config))?;
            tasks::run_check(&config, &out, args.seed, args.tolerance)
        }
        Command::Lyapunov(args) => {
            let config = load(args, "lyapunov")?;
            let out = resolve_out_dir(&args.out, Some(&config))?;
            tasks::run_lyapunov(&config, &out)
        }
        Command::Linear(args) => {
            let config = load(args, "linear")?;
            let out = resolve_out_dir(&args.out, Some(&config))?;
            tasks::run_linear(&config, &out)
        }
        Command::Observe(args) => {
            let config = load(args, "observe")?;
            let out = resolve_out_dir(&args.out, Some(&config))?;
            tasks::run_observe(&config, &out, args.tolerance)
        }
        Command::Valuefn(args) => {
            let config = load(args, "valuefn")?;
            let out = resolve_out_dir(&args.out, Some(&config))?;
            tasks::run_valuefn(&config, &out)
        }
        Command::Replay {
            config,
            out,
            tolerance,
        } => {
            let out = resolve_out_dir(out, None)?;
            tasks::run_replay(config, &out, *tolerance)
        }
    }
}

fn main() -> ExitCode {
    match dispatch() {
        Ok(outcome) => {
            println!("{}", outcome.summary);
            ExitCode::from(outcome.exit_code)
        }
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(1)
        }
    }
}
