//! Command-line front end: configuration ingestion, the `solve`, `sweep`,
//! `grad-check` and `baseline` commands, and CSV/JSON output for external
//! plotting.

pub mod commands;
pub mod config;
pub mod output;

use std::fmt;
use std::path::Path;

pub use commands::{baseline, grad_check, solve, sweep, Outcome};
pub use config::{RunConfig, Scenario};

/// Process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    pub const USAGE: i32 = 1;
    pub const NOT_CONVERGED: i32 = 2;
    pub const INFEASIBLE: i32 = 3;
    pub const GRADIENT_CHECK_FAILED: i32 = 4;
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Infeasible(String),
    Io(String),
}

impl CliError {
    pub fn usage(msg: impl Into<String>) -> Self {
        CliError::Usage(msg.into())
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Io(_) => exit::USAGE,
            CliError::Infeasible(_) => exit::INFEASIBLE,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Infeasible(m) | CliError::Io(m) => f.write_str(m),
        }
    }
}

impl std::error::Error for CliError {}

impl From<confgames_core::Error> for CliError {
    fn from(e: confgames_core::Error) -> Self {
        use confgames_core::Error as E;
        match e {
            E::InfeasibleTheta { .. } | E::BestResponseStalled { .. } | E::BlowUpDetected { .. } => {
                CliError::Infeasible(e.to_string())
            }
            other => CliError::Usage(other.to_string()),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    Solve,
    Sweep,
    GradCheck,
    Baseline,
}

/// Runs one command and returns its exit code; errors are reported on stderr.
pub fn run(command: Command, config: &RunConfig, dir: &Path) -> i32 {
    let code = match command {
        Command::Solve => solve(config, dir).map(|o| o.exit_code),
        Command::Sweep => sweep(config, dir).map(|o| o.exit_code),
        Command::GradCheck => grad_check(config, dir).map(|o| o.exit_code),
        Command::Baseline => baseline(config, dir).map(|o| o.exit_code),
    };
    code.unwrap_or_else(|e| {
        eprintln!("error: {e}");
        e.exit_code()
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use confgames_core::Error;

    #[test]
    fn core_errors_map_to_exit_codes() {
        let infeasible = Error::InfeasibleTheta { theta: vec![0.1], reason: "diverged".into() };
        assert_eq!(CliError::from(infeasible).exit_code(), exit::INFEASIBLE);
        let stalled = Error::BestResponseStalled { player: 0, trace: Box::default() };
        assert_eq!(CliError::from(stalled).exit_code(), exit::INFEASIBLE);
        let blow_up = Error::BlowUpDetected { time: 0.5, block: 0, norm: 1e9 };
        assert_eq!(CliError::from(blow_up).exit_code(), exit::INFEASIBLE);
        let bad = Error::PreconditionViolation("θ outside the box".into());
        assert_eq!(CliError::from(bad).exit_code(), exit::USAGE);
        assert_eq!(CliError::from(Error::InvalidGame("x".into())).exit_code(), exit::USAGE);
    }
}
