//! Two-stage games of configuration over finite-horizon affine-quadratic
//! differential games.
//!
//! Stage 2 is the feedback Nash equilibrium of the AQ game at fixed
//! parameters `θ`, computed from coupled Riccati equations ([`riccati`]).
//! Stage 1 chooses `θ` by gradient play on the Stage-2 values, with exact
//! gradients from the differentiated Riccati flow ([`sensitivity`]) and
//! iterated best response ([`solver`]).

pub mod error;
pub mod game;
pub mod grid;
pub mod ode;
pub mod riccati;
pub mod scenarios;
pub mod sensitivity;
pub mod solver;
mod table;

pub use error::{Error, Result};
pub use game::{ConfigGame, Dependence, GameSpec, MatrixFn, ParamBox, Regularizer, ZeroSumSpec};
pub use grid::{MatrixPath, TimeGrid, DEFAULT_STEPS};
pub use riccati::{rollout, solve_stage_two, StageTwoSolution, TrajectoryRollout};
pub use scenarios::{
    build_general_sum, build_pursuit_evasion, random_aq_game, GeneralSumSpec, PursuitEvasionSpec, RandomGameSpec,
};
pub use sensitivity::{
    envelope_gradient, finite_difference_gradient, sensitivity, value_and_gradient, value_gradient, SensitivityBundle,
};
pub use solver::{
    best_response, certify_first_order, ibr_solve, naive_baseline, project, BaselineOutcome, Certificate, IbrTrace,
    SolverSettings, Verdict,
};
