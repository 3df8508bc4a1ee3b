use std::path::PathBuf;
use std::process::ExitCode;

use armdp_cli::config::{PrimalSpec, PRESET_APPENDIX_H};
use armdp_cli::{run, CliError, Command, ExperimentConfig};
use clap::{Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "armdp", version, about = "Goal-oriented sampling and remote decision-making experiments")]
struct Cli {
    /// JSON experiment config; omitted fields take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides the config's `out`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Master seed for the simulator (overrides `sim.seed`).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Named source MDP (overrides the config's `primal`).
    #[arg(long, global = true, value_enum)]
    preset: Option<Preset>,
    #[command(subcommand)]
    command: Sub,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Preset {
    #[value(name = "appendix-h")]
    AppendixH,
}

#[derive(Debug, Clone, Copy, Subcommand)]
enum Sub {
    /// Unconstrained optimum with the configured method, plus its trace.
    Solve,
    /// Frequency-constrained optimum for each `f_max`.
    SolveRate,
    /// Cost of each policy across a delay grid.
    SweepDelay,
    /// Cost of each policy across a grid of frequency budgets.
    SweepRate,
    /// Monte Carlo run of each configured policy.
    Simulate,
    /// Residual traces of RVI, τ-RVI, FPBI and OnePDSI.
    Trace,
    /// Relative cost reductions against the waiting baselines.
    Table6,
}

impl From<Sub> for Command {
    fn from(s: Sub) -> Self {
        match s {
            Sub::Solve => Command::Solve,
            Sub::SolveRate => Command::SolveRate,
            Sub::SweepDelay => Command::SweepDelay,
            Sub::SweepRate => Command::SweepRate,
            Sub::Simulate => Command::Simulate,
            Sub::Trace => Command::Trace,
            Sub::Table6 => Command::Table6,
        }
    }
}

fn execute(cli: Cli) -> Result<Vec<PathBuf>, CliError> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::from_path(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(Preset::AppendixH) = cli.preset {
        cfg.primal = PrimalSpec::Preset(PRESET_APPENDIX_H.into());
    }
    if let Some(seed) = cli.seed {
        cfg.sim.seed = seed;
    }
    if let Some(out) = cli.out {
        cfg.out = out;
    }
    let out = cfg.out.clone();
    run(cli.command.into(), &cfg, &out)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(paths) => {
            for p in paths {
                println!("{}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
