use thiserror::Error;

use crate::solver::IbrTrace;

/// Errors produced anywhere in the solver pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not positive definite: {0}")]
    PositiveDefinitenessViolation(String),

    #[error("integration diverged at t = {time} (block {block}, norm {norm:.3e})")]
    BlowUpDetected { time: f64, block: usize, norm: f64 },

    #[error("non-finite value encountered at t = {time}")]
    NumericalFailure { time: f64 },

    #[error("no bounded Riccati solution at theta = {theta:?}: {reason}")]
    InfeasibleTheta { theta: Vec<f64>, reason: String },

    #[error("best response for player {player} stalled after repeated step rejections")]
    BestResponseStalled { player: usize, trace: Box<IbrTrace> },

    #[error("precondition violated: {0}")]
    PreconditionViolation(String),

    #[error("invalid game: {0}")]
    InvalidGame(String),

    #[error("invalid time grid: {0}")]
    InvalidGrid(String),

    #[error("could not generate a bounded random game after {attempts} attempts")]
    GenerationFailed { attempts: usize },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Wraps a Stage-2 failure as an infeasible-parameter error.
    pub(crate) fn infeasible(theta: &[f64], source: Error) -> Error {
        match source {
            Error::InfeasibleTheta { .. } => source,
            other => Error::InfeasibleTheta {
                theta: theta.to_vec(),
                reason: other.to_string(),
            },
        }
    }
}
