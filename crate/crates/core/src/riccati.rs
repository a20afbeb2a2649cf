//! Stage-2 feedback Nash equilibrium of a parametrized AQ game.
//!
//! The solve runs in three backward passes on one shared grid: the coupled
//! Riccati flow for `P^i`, the linear affine terms `ζ^i` (coupled through
//! `β = c − Σ S^{ii} ζ^i`), and the scalar offsets `η^i`.

use std::borrow::Cow;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::game::{Coefficients, ConfigGame};
use crate::grid::{MatrixPath, TimeGrid};
use crate::ode::{self, Stack, DEFAULT_BLOWUP_THRESHOLD};
use crate::table::Table;

pub(crate) type CoefficientTable = Table<Coefficients>;

/// Everything known about the Stage-2 equilibrium at one `θ`.
#[derive(Clone, Debug)]
pub struct StageTwoSolution {
    pub theta: Vec<f64>,
    pub grid: TimeGrid,
    pub p: Vec<MatrixPath>,
    pub zeta: Vec<MatrixPath>,
    pub eta: Vec<MatrixPath>,
    pub beta: MatrixPath,
    /// `J^i(θ)` at the game's initial state, regularizer included.
    pub values: Vec<f64>,
    /// `r^i(θ)`, zero when the game has no regularizer.
    pub regularization: Vec<f64>,
    pub zero_sum: bool,
    pub(crate) table: Option<Arc<CoefficientTable>>,
}

impl StageTwoSolution {
    /// `J^i = ½ x0ᵀP^i(0)x0 + ζ^i(0)ᵀx0 + η^i(0) + r^i(θ)`.
    pub fn value(&self, x0: &DVector<f64>, i: usize) -> f64 {
        let p0 = self.p[i].first();
        let quad = 0.5 * x0.dot(&(p0 * x0));
        let lin = self.zeta[i].first().column(0).dot(x0);
        quad + lin + self.eta[i].first()[(0, 0)] + self.regularization[i]
    }

    pub fn values_at(&self, x0: &DVector<f64>) -> Vec<f64> {
        (0..self.p.len()).map(|i| self.value(x0, i)).collect()
    }

    /// Coefficients at `t`, from the shared table when `t` is a stage time.
    pub(crate) fn coefficients<'a>(&'a self, game: &ConfigGame, t: f64) -> Result<Cow<'a, Coefficients>> {
        match &self.table {
            Some(table) => table.lookup(t, |t| game.coefficients(t, &self.theta)),
            None => game.coefficients(t, &self.theta).map(Cow::Owned),
        }
    }
}

/// Closed-loop state, controls and per-player costs of the equilibrium.
#[derive(Clone, Debug)]
pub struct TrajectoryRollout {
    pub x: MatrixPath,
    pub u: Vec<MatrixPath>,
    /// Integrated running cost plus terminal cost plus `r^i(θ)`.
    pub costs: Vec<f64>,
}

fn mat(v: &DVector<f64>) -> DMatrix<f64> {
    DMatrix::from_column_slice(v.len(), 1, v.as_slice())
}

pub(crate) fn coefficient_table(game: &ConfigGame, theta: &[f64], grid: &TimeGrid) -> Result<CoefficientTable> {
    Table::build(grid, |t| game.coefficients(t, theta))
}

fn coupled_riccati(game: &ConfigGame, table: &CoefficientTable, theta: &[f64], grid: &TimeGrid) -> Result<Vec<MatrixPath>> {
    let players = game.players();
    let terminal: Stack = (0..players).map(|i| game.qf(i).clone()).collect();
    ode::integrate_backward_projected(
        |t, p| {
            let co = table.lookup(t, |t| game.coefficients(t, theta))?;
            let mut f = co.a.clone();
            for (j, pj) in p.iter().enumerate() {
                f -= &co.s[j][j] * pj;
            }
            let ft = f.transpose();
            Ok((0..players)
                .map(|i| {
                    let mut d = &p[i] * &f + &ft * &p[i] + &co.q[i];
                    for (j, pj) in p.iter().enumerate() {
                        d += pj * &co.s[i][j] * pj;
                    }
                    -d
                })
                .collect())
        },
        terminal,
        grid,
        DEFAULT_BLOWUP_THRESHOLD,
        ode::symmetrize_all,
    )
}

/// Solves the N coupled Riccati equations
/// `Ṗ^i + P^iF̃ + F̃ᵀP^i + Q^i + Σ_j P^jS^{ij}P^j = 0`, `P^i(T) = Qf^i`.
pub fn solve_coupled_riccati(game: &ConfigGame, theta: &[f64], grid: &TimeGrid) -> Result<Vec<MatrixPath>> {
    let table = coefficient_table(game, theta, grid)?;
    coupled_riccati(game, &table, theta, grid)
}

fn zerosum_riccati(game: &ConfigGame, table: &CoefficientTable, theta: &[f64], grid: &TimeGrid) -> Result<MatrixPath> {
    if !game.is_zero_sum() {
        return Err(Error::PreconditionViolation("game is not zero-sum".into()));
    }
    let mut paths = ode::integrate_backward_projected(
        |t, p| {
            let co = table.lookup(t, |t| game.coefficients(t, theta))?;
            let s = co.s_tilde.as_ref().expect("zero-sum coefficients carry S̃");
            let pm = &p[0];
            Ok(vec![-(pm * &co.a + co.a.transpose() * pm + &co.q[0] + pm * s * pm)])
        },
        vec![game.qf(0).clone()],
        grid,
        DEFAULT_BLOWUP_THRESHOLD,
        ode::symmetrize_all,
    )?;
    Ok(paths.remove(0))
}

/// Solves `Ṗ + PA + AᵀP + Q + PS̃P = 0`, `P(T) = Qf` for a zero-sum game,
/// where `S̃ = B²B²ᵀ − B¹B¹ᵀ` and `P` encodes the minimizer's cost.
pub fn solve_zerosum_riccati(game: &ConfigGame, theta: &[f64], grid: &TimeGrid) -> Result<MatrixPath> {
    if !game.is_zero_sum() {
        return Err(Error::PreconditionViolation("game is not zero-sum".into()));
    }
    let table = coefficient_table(game, theta, grid)?;
    zerosum_riccati(game, &table, theta, grid)
}

/// `β = c − Σ_i S^{ii} ζ^i`.
pub(crate) fn beta_from(co: &Coefficients, zeta: &[DMatrix<f64>]) -> DMatrix<f64> {
    let mut b = co.c.clone();
    for (i, z) in zeta.iter().enumerate() {
        b -= &co.s[i][i] * z;
    }
    b
}

fn zeta_flow(
    game: &ConfigGame,
    table: &CoefficientTable,
    theta: &[f64],
    p: &[MatrixPath],
    grid: &TimeGrid,
) -> Result<(Vec<MatrixPath>, MatrixPath)> {
    let players = game.players();
    let n = game.state_dim();
    if !game.is_affine() {
        let zeros = vec![MatrixPath::zeros(*grid, n, 1); players];
        return Ok((zeros, MatrixPath::zeros(*grid, n, 1)));
    }
    let zeta = ode::integrate_backward(
        |t, z| {
            let co = table.lookup(t, |t| game.coefficients(t, theta))?;
            let ps: Vec<DMatrix<f64>> = p.iter().map(|path| path.at(t)).collect();
            let mut f = co.a.clone();
            for (j, pj) in ps.iter().enumerate() {
                f -= &co.s[j][j] * pj;
            }
            let beta = beta_from(&co, z);
            let ft = f.transpose();
            Ok((0..players)
                .map(|i| {
                    let mut d = &ft * &z[i] + &ps[i] * &beta;
                    for j in 0..players {
                        d += &ps[j] * (&co.s[i][j] * &z[j]);
                    }
                    -d
                })
                .collect())
        },
        vec![DMatrix::zeros(n, 1); players],
        grid,
        DEFAULT_BLOWUP_THRESHOLD,
    )?;
    let samples = grid
        .nodes()
        .enumerate()
        .map(|(k, t)| {
            let zs: Vec<DMatrix<f64>> = zeta.iter().map(|z| z.sample(k).clone()).collect();
            Ok(beta_from(&game.coefficients(t, theta)?, &zs))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((zeta, MatrixPath::new(*grid, samples)?))
}

/// Solves the stacked linear equations
/// `ζ̇^i + F̃ᵀζ^i + Σ_j P^jS^{ij}ζ^j + P^iβ = 0`, `ζ^i(T) = 0`,
/// returning `ζ` and the path of `β`.
pub fn solve_zeta(
    game: &ConfigGame,
    theta: &[f64],
    p: &[MatrixPath],
    grid: &TimeGrid,
) -> Result<(Vec<MatrixPath>, MatrixPath)> {
    let table = coefficient_table(game, theta, grid)?;
    zeta_flow(game, &table, theta, p, grid)
}

fn eta_flow(
    game: &ConfigGame,
    table: &CoefficientTable,
    theta: &[f64],
    zeta: &[MatrixPath],
    grid: &TimeGrid,
) -> Result<Vec<MatrixPath>> {
    let players = game.players();
    if !game.is_affine() {
        return Ok(vec![MatrixPath::zeros(*grid, 1, 1); players]);
    }
    ode::integrate_backward(
        |t, _| {
            let co = table.lookup(t, |t| game.coefficients(t, theta))?;
            let zs: Vec<DMatrix<f64>> = zeta.iter().map(|z| z.at(t)).collect();
            let beta = beta_from(&co, &zs);
            Ok((0..players)
                .map(|i| {
                    let mut d = beta.dot(&zs[i]);
                    for (j, zj) in zs.iter().enumerate() {
                        d += 0.5 * zj.dot(&(&co.s[i][j] * zj));
                    }
                    DMatrix::from_element(1, 1, -d)
                })
                .collect())
        },
        vec![DMatrix::zeros(1, 1); players],
        grid,
        DEFAULT_BLOWUP_THRESHOLD,
    )
}

/// Solves `η̇^i + βᵀζ^i + ½ Σ_j ζ^jᵀS^{ij}ζ^j = 0`, `η^i(T) = 0`.
pub fn solve_eta(game: &ConfigGame, theta: &[f64], zeta: &[MatrixPath], grid: &TimeGrid) -> Result<Vec<MatrixPath>> {
    let table = coefficient_table(game, theta, grid)?;
    eta_flow(game, &table, theta, zeta, grid)
}

fn regularization(game: &ConfigGame, theta: &[f64]) -> Vec<f64> {
    (0..game.players())
        .map(|i| game.regularizer().map_or(0.0, |r| r.value(i, theta)))
        .collect()
}

/// Full Stage-2 solve at `θ`. Divergence of any flow is reported as
/// [`Error::InfeasibleTheta`].
pub fn solve_stage_two(game: &ConfigGame, theta: &[f64], grid: &TimeGrid) -> Result<StageTwoSolution> {
    if theta.len() != game.players() {
        return Err(Error::PreconditionViolation(format!(
            "expected {} parameters, got {}",
            game.players(),
            theta.len()
        )));
    }
    let wrap = |e: Error| match e {
        Error::BlowUpDetected { .. } | Error::NumericalFailure { .. } => Error::infeasible(theta, e),
        other => other,
    };
    let n = game.state_dim();
    let players = game.players();
    let table = coefficient_table(game, theta, grid)?;
    let (p, zeta, eta, beta) = if game.is_zero_sum() {
        let pz = zerosum_riccati(game, &table, theta, grid).map_err(wrap)?;
        let neg = pz.scaled(-1.0);
        (
            vec![pz, neg],
            vec![MatrixPath::zeros(*grid, n, 1); players],
            vec![MatrixPath::zeros(*grid, 1, 1); players],
            MatrixPath::zeros(*grid, n, 1),
        )
    } else {
        let p = coupled_riccati(game, &table, theta, grid).map_err(wrap)?;
        let (zeta, beta) = zeta_flow(game, &table, theta, &p, grid).map_err(wrap)?;
        let eta = eta_flow(game, &table, theta, &zeta, grid).map_err(wrap)?;
        (p, zeta, eta, beta)
    };
    let mut sol = StageTwoSolution {
        theta: theta.to_vec(),
        grid: *grid,
        p,
        zeta,
        eta,
        beta,
        values: Vec::new(),
        regularization: regularization(game, theta),
        zero_sum: game.is_zero_sum(),
        table: Some(Arc::new(table)),
    };
    sol.values = sol.values_at(game.x0());
    Ok(sol)
}

/// `J^i` for the solved game at initial state `x0` (regularizer included).
pub fn stage_two_value(solution: &StageTwoSolution, x0: &DVector<f64>, i: usize) -> f64 {
    solution.value(x0, i)
}

/// Equilibrium controls `u^i = −(R^{ii})⁻¹B^{iᵀ}(P^i x + ζ^i)` at time `t`.
pub fn controls_at(
    game: &ConfigGame,
    solution: &StageTwoSolution,
    x: &DMatrix<f64>,
    t: f64,
) -> Result<Vec<DMatrix<f64>>> {
    let co = solution.coefficients(game, t)?;
    Ok((0..game.players())
        .map(|i| -(&co.gain[i] * (solution.p[i].at(t) * x + solution.zeta[i].at(t))))
        .collect())
}

/// Simulates the closed loop from the game's `x0` and integrates each
/// player's cost by quadrature.
pub fn rollout(game: &ConfigGame, solution: &StageTwoSolution, grid: &TimeGrid) -> Result<TrajectoryRollout> {
    let players = game.players();
    let theta = &solution.theta;
    let x0 = mat(game.x0());
    let mut xs = ode::integrate_forward(
        |t, x| {
            let u = controls_at(game, solution, &x[0], t)?;
            let co = solution.coefficients(game, t)?;
            let mut dx = &co.a * &x[0] + &co.c;
            for (j, uj) in u.iter().enumerate() {
                dx += game.b(j, t, theta) * uj;
            }
            Ok(vec![dx])
        },
        vec![x0],
        grid,
        DEFAULT_BLOWUP_THRESHOLD,
    )?;
    let x = xs.remove(0);

    let mut u_samples: Vec<Vec<DMatrix<f64>>> = vec![Vec::with_capacity(grid.len()); players];
    for (k, t) in grid.nodes().enumerate() {
        for (i, ui) in controls_at(game, solution, x.sample(k), t)?.into_iter().enumerate() {
            u_samples[i].push(ui);
        }
    }
    let u = u_samples
        .into_iter()
        .map(|s| MatrixPath::new(*grid, s))
        .collect::<Result<Vec<_>>>()?;

    let mut costs = Vec::with_capacity(players);
    for i in 0..players {
        let mut failure = None;
        let running = ode::quadrature(
            |t| {
                let xt = x.at(t);
                let us = match controls_at(game, solution, &xt, t) {
                    Ok(us) => us,
                    Err(e) => {
                        failure = Some(e);
                        return f64::NAN;
                    }
                };
                let mut l = xt.dot(&(game.q(i, t, theta) * &xt));
                for (j, uj) in us.iter().enumerate() {
                    l += uj.dot(&(game.r(i, j, t) * uj));
                }
                l
            },
            grid,
        );
        if let Some(e) = failure {
            return Err(e);
        }
        let xt = x.last();
        let terminal = xt.dot(&(game.qf(i) * xt));
        costs.push(0.5 * (running? + terminal) + solution.regularization[i]);
    }
    Ok(TrajectoryRollout { x, u, costs })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::{Dependence, GameSpec, MatrixFn, ParamBox};

    fn scalar(v: f64) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, v)
    }

    fn scalar_lqr(q: f64, c: f64, b_theta: bool) -> ConfigGame {
        let b = if b_theta {
            MatrixFn::parametrized(1, 1, Dependence::Player(0), |_, th| scalar(th[0]), |_, _, _| scalar(1.0))
        } else {
            MatrixFn::zeros(1, 1)
        };
        ConfigGame::new(GameSpec {
            horizon: 1.0,
            a: MatrixFn::zeros(1, 1),
            b: vec![b],
            q: vec![MatrixFn::constant(scalar(q))],
            r: vec![vec![MatrixFn::identity(1)]],
            c: MatrixFn::constant(scalar(c)),
            qf: vec![scalar(0.0)],
            theta_box: vec![ParamBox::new(0.5, 2.0).unwrap()],
            x0: DVector::from_element(1, 1.5),
            regularizer: None,
            zero_sum: false,
        })
        .unwrap()
    }

    #[test]
    fn scalar_lqr_matches_tanh_closed_form() {
        let game = scalar_lqr(1.0, 0.0, true);
        let grid = TimeGrid::new(1.0, 1000).unwrap();
        let p = solve_coupled_riccati(&game, &[1.0], &grid).unwrap();
        assert!((p[0].first()[(0, 0)] - 1f64.tanh()).abs() < 1e-8);
        let sol = solve_stage_two(&game, &[1.0], &grid).unwrap();
        let expected = 0.5 * 1.5f64.powi(2) * 1f64.tanh();
        assert!((sol.values[0] - expected).abs() < 1e-8);
        let roll = rollout(&game, &sol, &grid).unwrap();
        assert!((roll.costs[0] - expected).abs() < 1e-6 * expected, "{} vs {expected}", roll.costs[0]);
        assert_eq!(roll.x.first()[(0, 0)], 1.5);
    }

    #[test]
    fn zero_costs_give_zero_solution() {
        let game = scalar_lqr(0.0, 0.0, true);
        let grid = TimeGrid::new(1.0, 100).unwrap();
        let sol = solve_stage_two(&game, &[1.0], &grid).unwrap();
        assert_eq!(sol.p[0].max_abs(), 0.0);
        let roll = rollout(&game, &sol, &grid).unwrap();
        assert_eq!(roll.u[0].max_abs(), 0.0);
        assert_eq!(roll.costs[0], 0.0);
        assert!(roll.x.samples().iter().all(|x| x[(0, 0)] == 1.5));
    }

    #[test]
    fn no_control_authority_leaves_zeta_zero() {
        let game = scalar_lqr(0.0, 1.0, false);
        let grid = TimeGrid::new(1.0, 100).unwrap();
        let sol = solve_stage_two(&game, &[1.0], &grid).unwrap();
        assert_eq!(sol.zeta[0].max_abs(), 0.0);
        assert_eq!(sol.eta[0].max_abs(), 0.0);
    }

    #[test]
    fn affine_scalar_value_matches_rollout() {
        let game = scalar_lqr(2.0, 0.7, true);
        let grid = TimeGrid::new(1.0, 1000).unwrap();
        let sol = solve_stage_two(&game, &[1.3], &grid).unwrap();
        assert!(sol.zeta[0].max_abs() > 1e-3);
        let roll = rollout(&game, &sol, &grid).unwrap();
        let v = sol.values[0];
        assert!((v - roll.costs[0]).abs() <= 1e-6 * (1.0 + v.abs()), "{v} vs {}", roll.costs[0]);
        assert_eq!(*sol.p[0].last(), *game.qf(0));
        assert_eq!(sol.zeta[0].last()[(0, 0)], 0.0);
        assert_eq!(sol.eta[0].last()[(0, 0)], 0.0);
    }

    #[test]
    fn unit_value_from_identity_riccati() {
        let grid = TimeGrid::new(1.0, 2).unwrap();
        let n = 2;
        let sol = StageTwoSolution {
            theta: vec![0.0],
            grid,
            p: vec![MatrixPath::constant(grid, DMatrix::identity(n, n))],
            zeta: vec![MatrixPath::zeros(grid, n, 1)],
            eta: vec![MatrixPath::zeros(grid, 1, 1)],
            beta: MatrixPath::zeros(grid, n, 1),
            values: vec![],
            regularization: vec![0.0],
            zero_sum: false,
            table: None,
        };
        assert_eq!(stage_two_value(&sol, &DVector::from_vec(vec![1.0, 1.0]), 0), 1.0);
    }
}
