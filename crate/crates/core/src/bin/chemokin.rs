//! Command-line driver: loads (or defaults) an experiment configuration,
//! applies the flag overrides, and runs one subcommand. Exit codes: 0 on
//! success, 1 on any error, 2 when `--strict` finds threshold violations.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use chemokin::harness::{self, Command, ExperimentConfig};

#[derive(Parser)]
#[command(
    name = "chemokin",
    version,
    about = "Run-and-tumble chemotaxis in exponential gradients: \
             analytic closures, agent ensembles, kinetic and macro solvers"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,

    /// JSON experiment configuration; defaults apply when omitted.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Output directory (overrides `outputs.dir`; default `chemokin-out`).
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    /// Master seed (overrides `numerics.seed`).
    #[arg(long, global = true, value_name = "U64")]
    seed: Option<u64>,

    /// Exit nonzero if any acceptance threshold is violated.
    #[arg(long, global = true)]
    strict: bool,

    /// Worker threads (0 = library default).
    #[arg(long, global = true, value_name = "N", env = "CHEMOKIN_THREADS")]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Stationary activity profiles and drift speeds in closed form.
    Closure,
    /// Agent-ensemble steady states and activity histograms.
    Agents,
    /// Kinetic transport solves: activity marginals and spatial density.
    Kinetic,
    /// Limiting advection / advection-diffusion solves of the density.
    Macro,
    /// Drift velocity vs gradient for several adaptation rates.
    VelocitySweep,
    /// Scale-separation sweep against the closure and the macro limit.
    Convergence,
    /// Agent histograms overlaid on the analytic profile, with distances.
    Compare,
}

impl Cmd {
    fn command(&self) -> Command {
        match self {
            Cmd::Closure => Command::Closure,
            Cmd::Agents => Command::Agents,
            Cmd::Kinetic => Command::Kinetic,
            Cmd::Macro => Command::Macro,
            Cmd::VelocitySweep => Command::VelocitySweep,
            Cmd::Convergence => Command::Convergence,
            Cmd::Compare => Command::Compare,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match drive(&cli) {
        Ok(violations) if violations.is_empty() => ExitCode::SUCCESS,
        Ok(violations) => {
            for v in &violations {
                eprintln!("violation: {v}");
            }
            if cli.strict {
                eprintln!("{} threshold violation(s) under --strict", violations.len());
                ExitCode::from(2)
            } else {
                ExitCode::SUCCESS
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn drive(cli: &Cli) -> chemokin::Result<Vec<String>> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::from_path(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.numerics.seed = seed;
    }
    let out_dir = cli
        .out
        .clone()
        .or_else(|| cfg.outputs.dir.clone())
        .unwrap_or_else(|| PathBuf::from("chemokin-out"));

    let command = cli.cmd.command();
    let report = match harness::thread_pool(cli.threads)? {
        Some(pool) => pool.install(|| harness::run(command, &cfg, &out_dir))?,
        None => harness::run(command, &cfg, &out_dir)?,
    };
    for file in &report.files {
        println!("wrote {}", file.display());
    }
    Ok(report.violations)
}
