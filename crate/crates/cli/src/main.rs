use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use confgames_cli::{exit, run, Command, RunConfig};

#[derive(Parser)]
#[command(name = "confgames", version, about = "Solve games of configuration over affine-quadratic differential games")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(clap::Args)]
struct Common {
    /// TOML file of dotted keys; every key has a default.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one key, e.g. `--set solver.alpha=0.1`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Output directory (defaults to the config's `out_dir`).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Iterated best response from `theta0`.
    Solve(Common),
    /// Values and own-gradients on a lattice over the parameter box.
    Sweep(Common),
    /// Compare sensitivity gradients with central differences.
    GradCheck(Common),
    /// Naive player versus the equilibrium (zero-sum scenarios).
    Baseline(Common),
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let (command, common) = match cli.command {
        Cmd::Solve(c) => (Command::Solve, c),
        Cmd::Sweep(c) => (Command::Sweep, c),
        Cmd::GradCheck(c) => (Command::GradCheck, c),
        Cmd::Baseline(c) => (Command::Baseline, c),
    };
    let mut overrides = common.overrides;
    if let Some(out) = &common.out {
        overrides.push(format!("out_dir={:?}", out.display().to_string()));
    }
    let config = match RunConfig::load(common.config.as_deref(), &overrides) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(exit::USAGE as u8);
        }
    };
    let dir = PathBuf::from(&config.out_dir);
    ExitCode::from(run(command, &config, &dir) as u8)
}
