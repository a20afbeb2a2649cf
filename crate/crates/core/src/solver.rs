//! Stage-1 solver: projected-gradient best responses, Gauss–Seidel iterated
//! best response, first-order certification and the naive baseline.

use nalgebra::DVector;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::game::{ConfigGame, ParamBox};
use crate::grid::TimeGrid;
use crate::sensitivity::{value_and_gradient, value_and_partial};

/// Rejected steps tolerated within one inner iteration before giving up.
const MAX_REJECTIONS: usize = 10;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SolverSettings {
    /// Gradient step `α`.
    pub step_size: f64,
    /// Convergence threshold `ε` on parameter moves (∞-norm).
    pub tolerance: f64,
    /// Outer sweep budget `ℓ_max`; zero evaluates `θ_0` only.
    pub max_outer: usize,
    /// Inner iteration budget `τ_max` per best response.
    pub max_inner: usize,
    pub stationarity_tol: f64,
    pub grid_steps: usize,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            step_size: 0.05,
            tolerance: 1e-6,
            max_outer: 100,
            max_inner: 500,
            stationarity_tol: 1e-4,
            grid_steps: crate::grid::DEFAULT_STEPS,
        }
    }
}

impl SolverSettings {
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::PreconditionViolation(format!("{name} must be positive, got {v}")))
            }
        };
        positive("step_size", self.step_size)?;
        positive("tolerance", self.tolerance)?;
        positive("stationarity_tol", self.stationarity_tol)?;
        if self.max_inner == 0 {
            return Err(Error::PreconditionViolation("max_inner must be positive".into()));
        }
        TimeGrid::new(1.0, self.grid_steps)?;
        Ok(())
    }

    pub fn grid(&self, horizon: f64) -> Result<TimeGrid> {
        TimeGrid::new(horizon, self.grid_steps)
    }
}

/// One evaluated inner iterate of a best response.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct InnerRecord {
    /// Outer sweep index; zero for a standalone best response.
    pub sweep: usize,
    pub player: usize,
    pub iter: usize,
    pub theta: Vec<f64>,
    /// Values of every player at `theta`.
    pub values: Vec<f64>,
    /// `dJ^i/dθ^i` for the moving player.
    pub grad_own: f64,
    /// Step size actually used to reach this iterate (zero at `τ = 0`).
    pub step_size: f64,
}

/// Full record of an iterated-best-response run.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct IbrTrace {
    /// `θ_ℓ` after every sweep; entry 0 is `θ_0`.
    pub sweeps: Vec<Vec<f64>>,
    pub records: Vec<InnerRecord>,
    pub converged: bool,
    pub theta: Vec<f64>,
    pub values: Vec<f64>,
    /// `gradients[i][k] = dJ^i/dθ^k` at the final `θ`.
    pub gradients: Vec<Vec<f64>>,
    /// ∞-norm move of the last sweep.
    pub last_step: f64,
    pub warnings: Vec<String>,
}

impl IbrTrace {
    /// `dJ^i/dθ^i` at the final `θ`.
    pub fn own_gradients(&self) -> Vec<f64> {
        self.gradients.iter().enumerate().map(|(i, row)| row[i]).collect()
    }
}

/// Outcome of one player's best response.
#[derive(Clone, Debug, PartialEq)]
pub struct BestResponse {
    pub theta_i: f64,
    pub records: Vec<InnerRecord>,
    pub warnings: Vec<String>,
    pub converged: bool,
}

/// Clamps `x` into the box.
pub fn project(x: f64, bx: &ParamBox) -> f64 {
    bx.project(x)
}

fn stalled(player: usize, records: Vec<InnerRecord>, warnings: Vec<String>, theta: &[f64]) -> Error {
    Error::BestResponseStalled {
        player,
        trace: Box::new(IbrTrace {
            sweeps: vec![theta.to_vec()],
            records,
            theta: theta.to_vec(),
            warnings,
            ..IbrTrace::default()
        }),
    }
}

fn best_response_in_sweep(
    game: &ConfigGame,
    theta: &[f64],
    i: usize,
    settings: &SolverSettings,
    grid: &TimeGrid,
    sweep: usize,
) -> Result<BestResponse> {
    let bx = game.theta_box()[i];
    let x0 = game.x0();
    let mut current = theta.to_vec();
    let (mut values, mut grads) = value_and_partial(game, &current, x0, i, grid)?;
    let mut records = vec![InnerRecord {
        sweep,
        player: i,
        iter: 0,
        theta: current.clone(),
        values: values.clone(),
        grad_own: grads[i],
        step_size: 0.0,
    }];
    let mut warnings = Vec::new();

    for tau in 1..=settings.max_inner {
        let mut alpha = settings.step_size;
        let mut rejections = 0;
        let mut ascent_retried = false;
        let (candidate, cand_values, cand_grads) = loop {
            let mut candidate = current.clone();
            candidate[i] = project(current[i] - alpha * grads[i], &bx);
            match value_and_partial(game, &candidate, x0, i, grid) {
                Err(Error::InfeasibleTheta { theta, reason }) => {
                    rejections += 1;
                    log::debug!("player {} step to {:?} rejected: {reason}", i + 1, theta);
                    if rejections >= MAX_REJECTIONS {
                        warnings.push(format!(
                            "player {} stalled at sweep {sweep}, iteration {tau}: {reason}",
                            i + 1
                        ));
                        return Err(stalled(i, records, warnings, &current));
                    }
                    alpha *= 0.5;
                }
                Err(e) => return Err(e),
                Ok((v, g)) => {
                    let slack = 1e-12 * values[i].abs().max(1.0);
                    if v[i] > values[i] + slack {
                        if !ascent_retried {
                            ascent_retried = true;
                            alpha *= 0.5;
                            continue;
                        }
                        warnings.push(format!(
                            "player {} accepted an ascent step at sweep {sweep}, iteration {tau} ({} -> {})",
                            i + 1,
                            values[i],
                            v[i]
                        ));
                    }
                    break (candidate, v, g);
                }
            }
        };
        let step = (candidate[i] - current[i]).abs();
        current = candidate;
        values = cand_values;
        grads = cand_grads;
        records.push(InnerRecord {
            sweep,
            player: i,
            iter: tau,
            theta: current.clone(),
            values: values.clone(),
            grad_own: grads[i],
            step_size: alpha,
        });
        if step <= settings.tolerance {
            return Ok(BestResponse {
                theta_i: current[i],
                records,
                warnings,
                converged: true,
            });
        }
    }
    warnings.push(format!(
        "player {} reached the inner iteration budget at sweep {sweep}",
        i + 1
    ));
    Ok(BestResponse {
        theta_i: current[i],
        records,
        warnings,
        converged: false,
    })
}

/// Projected gradient descent on `θ^i` with every other parameter held fixed.
pub fn best_response(game: &ConfigGame, theta: &[f64], i: usize, settings: &SolverSettings) -> Result<BestResponse> {
    settings.validate()?;
    if i >= game.players() {
        return Err(Error::PreconditionViolation(format!("no player {}", i + 1)));
    }
    game.check_theta(theta)?;
    let grid = settings.grid(game.horizon())?;
    best_response_in_sweep(game, theta, i, settings, &grid, 0)
}

fn inf_norm_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Iterated best response with Gauss–Seidel sweeps over the players.
pub fn ibr_solve(game: &ConfigGame, theta0: &[f64], settings: &SolverSettings) -> Result<IbrTrace> {
    settings.validate()?;
    game.check_theta(theta0)?;
    let grid = settings.grid(game.horizon())?;
    let mut trace = IbrTrace {
        sweeps: vec![theta0.to_vec()],
        last_step: f64::INFINITY,
        ..IbrTrace::default()
    };
    let mut prev = theta0.to_vec();
    for sweep in 1..=settings.max_outer {
        let mut cur = prev.clone();
        for i in 0..game.players() {
            match best_response_in_sweep(game, &cur, i, settings, &grid, sweep) {
                Ok(br) => {
                    cur[i] = br.theta_i;
                    trace.records.extend(br.records);
                    trace.warnings.extend(br.warnings);
                }
                Err(Error::BestResponseStalled { player, trace: partial }) => {
                    trace.records.extend(partial.records);
                    trace.warnings.extend(partial.warnings);
                    trace.theta = cur;
                    return Err(Error::BestResponseStalled {
                        player,
                        trace: Box::new(trace),
                    });
                }
                Err(e) => return Err(e),
            }
        }
        trace.last_step = inf_norm_diff(&cur, &prev);
        trace.sweeps.push(cur.clone());
        log::info!("sweep {sweep}: theta = {cur:?}, step = {:.3e}", trace.last_step);
        prev = cur;
        if trace.last_step <= settings.tolerance {
            trace.converged = true;
            break;
        }
    }
    let (values, gradients) = value_and_gradient(game, &prev, game.x0(), &grid)?;
    trace.theta = prev;
    trace.values = values;
    trace.gradients = gradients;
    Ok(trace)
}

/// First-order local-equilibrium verdict for one player.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Verdict {
    InteriorStationary,
    BoundaryDescentOutward,
    NotStationary,
}

impl Verdict {
    pub fn as_str(&self) -> &'static str {
        match self {
            Verdict::InteriorStationary => "INTERIOR_STATIONARY",
            Verdict::BoundaryDescentOutward => "BOUNDARY_DESCENT_OUTWARD",
            Verdict::NotStationary => "NOT_STATIONARY",
        }
    }

    pub fn is_certified(&self) -> bool {
        !matches!(self, Verdict::NotStationary)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Certificate {
    pub verdict: Verdict,
    pub grad_own: f64,
}

/// Classifies an own-gradient at a box coordinate.
pub fn classify(x: f64, grad: f64, bx: &ParamBox, tol: f64) -> Verdict {
    if grad.abs() <= tol {
        Verdict::InteriorStationary
    } else if (x <= bx.min && grad > 0.0) || (x >= bx.max && grad < 0.0) {
        // the descent direction −grad leaves the box
        Verdict::BoundaryDescentOutward
    } else {
        Verdict::NotStationary
    }
}

/// Checks each player's first-order optimality condition at `θ`.
pub fn certify_first_order(game: &ConfigGame, theta: &[f64], settings: &SolverSettings) -> Result<Vec<Certificate>> {
    game.check_theta(theta)?;
    let grid = settings.grid(game.horizon())?;
    let (_, gradients) = value_and_gradient(game, theta, game.x0(), &grid)?;
    Ok(gradients
        .iter()
        .enumerate()
        .map(|(i, row)| Certificate {
            verdict: classify(theta[i], row[i], &game.theta_box()[i], settings.stationarity_tol),
            grad_own: row[i],
        })
        .collect())
}

/// Naive player against the fixed `θ_0`, evaluated against the equilibrium.
#[derive(Clone, Debug, PartialEq)]
pub struct BaselineOutcome {
    pub naive_player: usize,
    pub naive: BestResponse,
    pub equilibrium: IbrTrace,
    /// Equilibrium `θ*` with the naive player's component replaced.
    pub realized_theta: Vec<f64>,
    /// `J^1` at `realized_theta`.
    pub realized_value: f64,
    /// `J^1(θ*)`.
    pub equilibrium_value: f64,
    /// How much worse the naive player does than at equilibrium (≥ 0 at a saddle).
    pub naive_regret: f64,
}

impl BaselineOutcome {
    /// `J^1(realized) − J^1(θ*)`.
    pub fn value_gap(&self) -> f64 {
        self.realized_value - self.equilibrium_value
    }
}

/// Runs the non-game-theoretic baseline for a two-player zero-sum game.
pub fn naive_baseline(
    game: &ConfigGame,
    theta0: &[f64],
    settings: &SolverSettings,
    naive_player: usize,
) -> Result<BaselineOutcome> {
    if !game.is_zero_sum() || game.players() != 2 {
        return Err(Error::PreconditionViolation("the baseline needs a two-player zero-sum game".into()));
    }
    if naive_player > 1 {
        return Err(Error::PreconditionViolation(format!("no player {}", naive_player + 1)));
    }
    let naive = best_response(game, theta0, naive_player, settings)?;
    let equilibrium = ibr_solve(game, theta0, settings)?;
    let mut realized_theta = equilibrium.theta.clone();
    realized_theta[naive_player] = naive.theta_i;
    let grid = settings.grid(game.horizon())?;
    let realized = crate::riccati::solve_stage_two(game, &realized_theta, &grid)?.values;
    let naive_regret = realized[naive_player] - equilibrium.values[naive_player];
    Ok(BaselineOutcome {
        naive_player,
        realized_value: realized[0],
        equilibrium_value: equilibrium.values[0],
        naive,
        equilibrium,
        realized_theta,
        naive_regret,
    })
}

/// Values and gradients at one lattice point, or why it failed.
#[derive(Clone, Debug, PartialEq)]
pub struct LandscapePoint {
    pub theta: Vec<f64>,
    pub outcome: std::result::Result<(Vec<f64>, Vec<Vec<f64>>), String>,
}

/// Evaluates values and gradients at every `θ` in parallel; failures are
/// recorded per point. Output order matches input order.
pub fn landscape(game: &ConfigGame, thetas: &[Vec<f64>], grid: &TimeGrid, x0: &DVector<f64>) -> Vec<LandscapePoint> {
    thetas
        .par_iter()
        .map(|theta| LandscapePoint {
            theta: theta.clone(),
            outcome: value_and_gradient(game, theta, x0, grid).map_err(|e| e.to_string()),
        })
        .collect()
}

/// Uniform `per_axis × per_axis` lattice over a two-dimensional box, first
/// coordinate varying slowest. A single point sits at the box midpoint.
pub fn lattice_2d(boxes: &[ParamBox], per_axis: usize) -> Vec<Vec<f64>> {
    let axis = |b: &ParamBox| -> Vec<f64> {
        if per_axis == 1 {
            vec![0.5 * (b.min + b.max)]
        } else {
            (0..per_axis)
                .map(|k| {
                    if k + 1 == per_axis {
                        b.max
                    } else {
                        b.min + b.width() * k as f64 / (per_axis - 1) as f64
                    }
                })
                .collect()
        }
    };
    let a = axis(&boxes[0]);
    let b = axis(&boxes[1]);
    a.iter().flat_map(|&x| b.iter().map(move |&y| vec![x, y])).collect()
}
