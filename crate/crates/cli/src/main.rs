//! `lobexec`: solve, classify and evaluate execution problems from a TOML config.

mod commands;
mod config;
mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use serde_json::{json, Value};

use config::{LoadedConfig, Variant};

#[derive(Parser)]
#[command(name = "lobexec", version, about = "Optimal execution in block-shaped limit order books")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Discrete optimal strategy, barrier and cost.
    Solve(Args),
    /// Price-manipulation regime of the profile.
    Classify(Args),
    /// Discrete values against the continuous-time reference over a sweep of grid sizes.
    Converge(Args),
    /// Cost of a given schedule.
    Evaluate(Args),
    /// Continuous-time barrier curve.
    Barrier(Args),
}

#[derive(clap::Args)]
struct Args {
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Grid steps (overrides grid.steps).
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    panels: Option<usize>,
    #[arg(long, value_enum)]
    variant: Option<Variant>,
    /// Override any config scalar, e.g. `--set profile.kappa=0.5`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Solve(_) => "solve",
            Command::Classify(_) => "classify",
            Command::Converge(_) => "converge",
            Command::Evaluate(_) => "evaluate",
            Command::Barrier(_) => "barrier",
        }
    }

    fn args(&self) -> &Args {
        match self {
            Command::Solve(a)
            | Command::Classify(a)
            | Command::Converge(a)
            | Command::Evaluate(a)
            | Command::Barrier(a) => a,
        }
    }
}

fn overrides(args: &Args) -> Result<Vec<(String, toml::Value)>> {
    let mut list = args
        .set
        .iter()
        .map(|s| config::parse_override(s))
        .collect::<Result<Vec<_>>>()?;
    let int = |v: usize| toml::Value::Integer(v as i64);
    if let Some(n) = args.n {
        list.push(("grid.steps".into(), int(n)));
    }
    if let Some(s) = args.samples {
        list.push(("numerics.samples".into(), int(s)));
    }
    if let Some(p) = args.panels {
        list.push(("numerics.panels".into(), int(p)));
    }
    Ok(list)
}

fn execute(command: &Command, cfg: &LoadedConfig, out: &Path) -> Result<Value> {
    let args = command.args();
    match command {
        Command::Solve(_) => commands::solve_cmd(cfg, out),
        Command::Classify(_) => commands::classify_cmd(cfg),
        Command::Converge(_) => commands::converge_cmd(cfg, out),
        Command::Evaluate(_) => {
            commands::evaluate_cmd(cfg, args.variant.unwrap_or(cfg.run.evaluate.variant))
        }
        Command::Barrier(_) => commands::barrier_cmd(cfg, out),
    }
}

fn run(command: &Command) -> (Value, Result<Value>) {
    let args = command.args();
    let loaded = overrides(args).and_then(|o| config::load(&args.config, &o));
    let echo = loaded.as_ref().map_or(Value::Null, |c| {
        serde_json::to_value(&c.raw).unwrap_or(Value::Null)
    });
    let result = loaded.and_then(|cfg| {
        std::fs::create_dir_all(&args.out)
            .with_context(|| format!("cannot create {}", args.out.display()))?;
        execute(command, &cfg, &args.out)
    });
    (echo, result)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let command = &cli.command;
    let out = &command.args().out;
    let (echo, result) = run(command);
    let (summary, code) = match result {
        Ok(results) => (
            json!({ "command": command.name(), "config": echo, "results": results }),
            ExitCode::SUCCESS,
        ),
        Err(err) => {
            let message = format!("{err:#}");
            eprintln!("error: {message}");
            (
                json!({ "command": command.name(), "config": echo, "error": { "message": message } }),
                ExitCode::FAILURE,
            )
        }
    };
    let written = std::fs::create_dir_all(out)
        .map_err(anyhow::Error::from)
        .and_then(|_| output::write_json(&out.join("summary.json"), &summary));
    if let Err(err) = written {
        eprintln!("error: {err:#}");
        return ExitCode::FAILURE;
    }
    code
}
