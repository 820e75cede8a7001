//! `lavc`: local average estimation and constancy tests for varying
//! coefficient models.
//!
//! Exit codes: 0 success, 2 input error, 3 numerical failure, 4 configuration
//! error.

mod commands;
mod failure;
mod settings;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Serialize;

use failure::Failure;
use settings::Settings;

#[derive(Debug, Parser)]
#[command(name = "lavc", version, about, long_about = None)]
struct Cli {
    /// Worker threads for parallel sections [default: all cores]. Results do
    /// not depend on it.
    #[arg(long, global = true, env = "LAVC_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit the varying coefficients and write one smoothed curve with
    /// pointwise bands as CSV (u, value, lower, upper, bias_est).
    FitVarying(Settings),
    /// Estimate the constant coefficients of a semivarying model (JSON).
    FitSemi(Settings),
    /// Test whether one coefficient is constant (JSON).
    Test(Settings),
    /// Run a Monte Carlo study into --out-dir (report.json, report.csv).
    Simulate(Settings),
    /// Time the estimators on one simulated sample into --out-dir.
    Bench(Settings),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::FitVarying(_) => "fit-varying",
            Command::FitSemi(_) => "fit-semi",
            Command::Test(_) => "test",
            Command::Simulate(_) => "simulate",
            Command::Bench(_) => "bench",
        }
    }
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    command: &'static str,
    threads: usize,
    settings: serde_json::Value,
    inputs: Vec<PathBuf>,
    outputs: &'a [PathBuf],
}

fn manifest_path(s: &Settings, outputs: &[PathBuf]) -> PathBuf {
    if let Some(path) = &s.manifest {
        return path.clone();
    }
    if let Some(dir) = &s.out_dir {
        return dir.join("manifest.json");
    }
    let mut name = outputs[0].clone().into_os_string();
    name.push(".manifest.json");
    name.into()
}

fn run(cli: Cli) -> Result<(), Failure> {
    if let Some(threads) = cli.threads {
        if threads == 0 {
            return Err(Failure::config("--threads must be positive"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| Failure::config(e.to_string()))?;
    }
    let name = cli.command.name();
    let (Command::FitVarying(s)
    | Command::FitSemi(s)
    | Command::Test(s)
    | Command::Simulate(s)
    | Command::Bench(s)) = cli.command;
    let mut s = s.resolve()?;
    let outputs = match name {
        "fit-varying" => commands::fit_varying(&mut s)?,
        "fit-semi" => commands::fit_semi(&mut s)?,
        "test" => commands::test(&mut s)?,
        "simulate" => commands::simulate(&mut s)?,
        _ => commands::bench(&mut s)?,
    };
    let manifest = Manifest {
        tool: "lavc",
        version: env!("CARGO_PKG_VERSION"),
        command: name,
        threads: rayon::current_num_threads(),
        settings: s.to_json(),
        inputs: s.input.iter().cloned().collect(),
        outputs: &outputs,
    };
    let path = manifest_path(&s, &outputs);
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| Failure::io(&path, e))?;
    std::fs::write(&path, text + "\n").map_err(|e| Failure::io(&path, e))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(failure::EXIT_CONFIG)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("lavc: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
