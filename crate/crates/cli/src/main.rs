use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use ergodesign::io::{load_model, load_scenario};
use ergodesign_cli::compare::{compare, read_norms};
use ergodesign_cli::{error_exit_code, evaluate, optimize, Outcome, Overrides, EXIT_BAD_INPUT};

/// Hardware co-design of a humanoid robot for collaborative lifting.
#[derive(Parser)]
#[command(name = "ergodesign", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Optimize robot hardware and postures for every scenario height.
    Optimize {
        scenario: PathBuf,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Solve posture-only problems for a fixed robot design.
    Evaluate {
        model: PathBuf,
        scenario: PathBuf,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Compare the torque norms of two reports.
    Compare { a: PathBuf, b: PathBuf },
}

#[derive(Args)]
struct RunArgs {
    /// Keep the robot hardware at its nominal values.
    #[arg(long)]
    freeze_hardware: bool,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    max_iter: Option<usize>,
    /// Report directory.
    #[arg(long, default_value = "report")]
    out: PathBuf,
}

impl RunArgs {
    fn overrides(&self) -> Overrides {
        Overrides {
            freeze_hardware: self.freeze_hardware,
            seed: self.seed,
            max_iter: self.max_iter,
        }
    }
}

fn finish(outcome: Result<Outcome>, out: &Path) -> Result<i32> {
    let outcome = outcome?;
    outcome.write(out)?;
    print!("{}", outcome.report.summary());
    Ok(outcome.exit_code)
}

fn run(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Optimize { scenario, run } => {
            let s = load_scenario(&scenario)?;
            finish(optimize(&s, &run.overrides()), &run.out)
        }
        Command::Evaluate { model, scenario, run } => {
            let m = load_model(&model)?;
            let s = load_scenario(&scenario)?;
            finish(evaluate(&m, &s, &run.overrides()), &run.out)
        }
        Command::Compare { a, b } => {
            let c = read_norms(&a).and_then(|ra| compare(&ra, &read_norms(&b)?));
            match c {
                Ok(c) => {
                    print!("{}", c.table());
                    Ok(0)
                }
                Err(e) => {
                    eprintln!("error: {e:#}");
                    Ok(EXIT_BAD_INPUT)
                }
            }
        }
    }
}

fn main() -> ExitCode {
    let code = match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            error_exit_code(&e)
        }
    };
    ExitCode::from(code as u8)
}
