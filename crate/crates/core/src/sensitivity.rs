//! Exact parameter gradients of the Stage-1 values.
//!
//! Differentiating the Riccati, affine and offset equations with respect to a
//! single parameter `θ^k` gives three linear backward ODEs whose coefficients
//! are read from a stored Stage-2 solution:
//!
//! ```text
//! Ṗ^i_k + P^i_k F̃ + F̃ᵀP^i_k + Σ_{j≠i} (P^j_k H̃^{ij} + H̃^{ijᵀ} P^j_k) + Q^i_k + G̃^{ik} = 0
//! ζ̇^i_k + F̃ᵀζ^i_k + Σ_{j≠i} H̃^{ijᵀ} ζ^j_k + F̃_kᵀ ζ^i + W^{ik} = 0
//! η̇^i_k + β_kᵀζ^i + βᵀζ^i_k + Σ_j (ζ^jᵀS^{ij}ζ^j_k + ½ ζ^jᵀS^{ij}_k ζ^j) = 0
//! ```
//!
//! with all terminal values zero, `H̃^{ij} = S^{ij}P^j − S^{jj}P^i`,
//! `G̃^{ik} = P^kS^{ik}_kP^k − (P^iS^{kk}_kP^k + P^kS^{kk}_kP^i)`, and
//! `W^{ik} = (P^kS^{ik}_k − P^iS^{kk}_k)ζ^k + P^i_kβ + Σ_j P^j_kS^{ij}ζ^j`.
//! The value gradient is `dJ^i/dθ^k = ½x0ᵀP^i_k(0)x0 + ζ^i_k(0)ᵀx0 + η^i_k(0)`
//! plus the regularizer gradient.

use std::borrow::Cow;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::game::{CoefficientDerivatives, Coefficients, ConfigGame};
use crate::grid::{MatrixPath, TimeGrid};
use crate::ode::{self, Stack, DEFAULT_BLOWUP_THRESHOLD};
use crate::riccati::{self, solve_stage_two, StageTwoSolution};
use crate::table::Table;

/// Derivative paths of a Stage-2 solution with respect to `θ^k`.
#[derive(Clone, Debug)]
pub struct SensitivityBundle {
    pub theta: Vec<f64>,
    pub k: usize,
    pub p: Vec<MatrixPath>,
    pub zeta: Vec<MatrixPath>,
    pub eta: Vec<MatrixPath>,
    pub beta: MatrixPath,
    /// `dJ^i/dθ^k` at the game's initial state, regularizer included.
    pub d_value: Vec<f64>,
    regularization: Vec<f64>,
}

impl SensitivityBundle {
    /// `dJ^i/dθ^k` for an arbitrary initial state.
    pub fn d_value_at(&self, x0: &DVector<f64>, i: usize) -> f64 {
        let quad = 0.5 * x0.dot(&(self.p[i].first() * x0));
        let lin = self.zeta[i].first().column(0).dot(x0);
        quad + lin + self.eta[i].first()[(0, 0)] + self.regularization[i]
    }
}

type DerivativeTable = Table<CoefficientDerivatives>;

fn derivative_table(game: &ConfigGame, stage2: &StageTwoSolution, k: usize, grid: &TimeGrid) -> Result<DerivativeTable> {
    Table::build(grid, |t| game.coefficient_derivatives(t, &stage2.theta, k))
}

fn derivatives_at<'a>(
    game: &ConfigGame,
    stage2: &StageTwoSolution,
    table: &'a DerivativeTable,
    k: usize,
    t: f64,
) -> Result<Cow<'a, CoefficientDerivatives>> {
    table.lookup(t, |t| game.coefficient_derivatives(t, &stage2.theta, k))
}

fn p_flow(
    game: &ConfigGame,
    k: usize,
    stage2: &StageTwoSolution,
    dt: &DerivativeTable,
    grid: &TimeGrid,
) -> Result<Vec<MatrixPath>> {
    let players = game.players();
    let n = game.state_dim();
    ode::integrate_backward_projected(
        |t, x| {
            let co = stage2.coefficients(game, t)?;
            let der = derivatives_at(game, stage2, dt, k, t)?;
            let p: Vec<DMatrix<f64>> = stage2.p.iter().map(|path| path.at(t)).collect();
            let mut f = co.a.clone();
            for (j, pj) in p.iter().enumerate() {
                f -= &co.s[j][j] * pj;
            }
            let ft = f.transpose();
            let dsk = &der.ds[k];
            let mut out: Stack = Vec::with_capacity(players);
            for i in 0..players {
                let mut d = &x[i] * &f + &ft * &x[i] + &der.dq[i];
                for j in (0..players).filter(|&j| j != i) {
                    let h = &co.s[i][j] * &p[j] - &co.s[j][j] * &p[i];
                    d += &x[j] * &h + h.transpose() * &x[j];
                }
                // G̃^{ik}, with the −2P^iS^{kk}_kP^k term in symmetric form
                let cross = &p[i] * dsk * &p[k];
                d += &p[k] * &der.ds[i] * &p[k] - &cross - cross.transpose();
                out.push(-d);
            }
            Ok(out)
        },
        vec![DMatrix::zeros(n, n); players],
        grid,
        DEFAULT_BLOWUP_THRESHOLD,
        ode::symmetrize_all,
    )
}

/// Solves the coupled linear system for `P^i_{θk}`.
pub fn solve_p_sensitivity(
    game: &ConfigGame,
    k: usize,
    stage2: &StageTwoSolution,
    grid: &TimeGrid,
) -> Result<Vec<MatrixPath>> {
    let dt = derivative_table(game, stage2, k, grid)?;
    p_flow(game, k, stage2, &dt, grid)
}

/// `β_{θk} = −Σ_j (∂S^{jj}/∂θ^k ζ^j + S^{jj} ζ^j_k)`; `c` does not depend on θ.
fn beta_k_from(co: &Coefficients, der: &CoefficientDerivatives, zeta: &[DMatrix<f64>], zeta_k: &[DMatrix<f64>]) -> DMatrix<f64> {
    let mut b = DMatrix::zeros(co.a.nrows(), 1);
    for j in 0..zeta.len() {
        b -= &der.ds_diag[j] * &zeta[j] + &co.s[j][j] * &zeta_k[j];
    }
    b
}

fn zeta_flow(
    game: &ConfigGame,
    k: usize,
    stage2: &StageTwoSolution,
    dt: &DerivativeTable,
    p_k: &[MatrixPath],
    grid: &TimeGrid,
) -> Result<(Vec<MatrixPath>, MatrixPath)> {
    let players = game.players();
    let n = game.state_dim();
    if !game.is_affine() {
        return Ok((vec![MatrixPath::zeros(*grid, n, 1); players], MatrixPath::zeros(*grid, n, 1)));
    }
    let zeta_k = ode::integrate_backward(
        |t, y| {
            let co = stage2.coefficients(game, t)?;
            let der = derivatives_at(game, stage2, dt, k, t)?;
            let p: Vec<DMatrix<f64>> = stage2.p.iter().map(|path| path.at(t)).collect();
            let xk: Vec<DMatrix<f64>> = p_k.iter().map(|path| path.at(t)).collect();
            let z: Vec<DMatrix<f64>> = stage2.zeta.iter().map(|path| path.at(t)).collect();
            let beta = riccati::beta_from(&co, &z);
            let mut f = co.a.clone();
            let mut f_k = -(&der.ds[k] * &p[k]);
            for j in 0..players {
                f -= &co.s[j][j] * &p[j];
                f_k -= &co.s[j][j] * &xk[j];
            }
            let ft = f.transpose();
            let fkt = f_k.transpose();
            let mut out: Stack = Vec::with_capacity(players);
            for i in 0..players {
                let mut d = &ft * &y[i] + &fkt * &z[i];
                for j in (0..players).filter(|&j| j != i) {
                    let ht = &p[j] * &co.s[i][j] - &p[i] * &co.s[j][j];
                    d += ht * &y[j];
                }
                d += (&p[k] * &der.ds[i] - &p[i] * &der.ds[k]) * &z[k] + &xk[i] * &beta;
                for j in 0..players {
                    d += &xk[j] * (&co.s[i][j] * &z[j]);
                }
                out.push(-d);
            }
            Ok(out)
        },
        vec![DMatrix::zeros(n, 1); players],
        grid,
        DEFAULT_BLOWUP_THRESHOLD,
    )?;
    let samples = grid
        .nodes()
        .enumerate()
        .map(|(idx, t)| {
            let y: Vec<DMatrix<f64>> = zeta_k.iter().map(|z| z.sample(idx).clone()).collect();
            let z: Vec<DMatrix<f64>> = stage2.zeta.iter().map(|path| path.sample(idx).clone()).collect();
            let co = game.coefficients(t, &stage2.theta)?;
            let der = game.coefficient_derivatives(t, &stage2.theta, k)?;
            Ok(beta_k_from(&co, &der, &z, &y))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((zeta_k, MatrixPath::new(*grid, samples)?))
}

/// Solves for `ζ^i_{θk}`; returns the paths and `β_{θk}`.
pub fn solve_zeta_sensitivity(
    game: &ConfigGame,
    k: usize,
    stage2: &StageTwoSolution,
    p_k: &[MatrixPath],
    grid: &TimeGrid,
) -> Result<(Vec<MatrixPath>, MatrixPath)> {
    let dt = derivative_table(game, stage2, k, grid)?;
    zeta_flow(game, k, stage2, &dt, p_k, grid)
}

fn eta_flow(
    game: &ConfigGame,
    k: usize,
    stage2: &StageTwoSolution,
    dt: &DerivativeTable,
    zeta_k: &[MatrixPath],
    grid: &TimeGrid,
) -> Result<Vec<MatrixPath>> {
    let players = game.players();
    if !game.is_affine() {
        return Ok(vec![MatrixPath::zeros(*grid, 1, 1); players]);
    }
    ode::integrate_backward(
        |t, _| {
            let co = stage2.coefficients(game, t)?;
            let der = derivatives_at(game, stage2, dt, k, t)?;
            let z: Vec<DMatrix<f64>> = stage2.zeta.iter().map(|path| path.at(t)).collect();
            let y: Vec<DMatrix<f64>> = zeta_k.iter().map(|path| path.at(t)).collect();
            let beta = riccati::beta_from(&co, &z);
            let beta_k = beta_k_from(&co, &der, &z, &y);
            let mut out: Stack = Vec::with_capacity(players);
            for i in 0..players {
                let mut d = beta_k.dot(&z[i]) + beta.dot(&y[i]);
                for j in 0..players {
                    d += z[j].dot(&(&co.s[i][j] * &y[j]));
                }
                d += 0.5 * z[k].dot(&(&der.ds[i] * &z[k]));
                out.push(DMatrix::from_element(1, 1, -d));
            }
            Ok(out)
        },
        vec![DMatrix::zeros(1, 1); players],
        grid,
        DEFAULT_BLOWUP_THRESHOLD,
    )
}

/// Solves for the scalar offsets `η^i_{θk}`.
pub fn solve_eta_sensitivity(
    game: &ConfigGame,
    k: usize,
    stage2: &StageTwoSolution,
    zeta_k: &[MatrixPath],
    grid: &TimeGrid,
) -> Result<Vec<MatrixPath>> {
    let dt = derivative_table(game, stage2, k, grid)?;
    eta_flow(game, k, stage2, &dt, zeta_k, grid)
}

fn zerosum_flow(
    game: &ConfigGame,
    k: usize,
    stage2: &StageTwoSolution,
    dt: &DerivativeTable,
    grid: &TimeGrid,
) -> Result<MatrixPath> {
    let n = game.state_dim();
    let mut paths = ode::integrate_backward_projected(
        |t, x| {
            let co = stage2.coefficients(game, t)?;
            let der = derivatives_at(game, stage2, dt, k, t)?;
            let s = co.s_tilde.as_ref().expect("zero-sum coefficients carry S̃");
            let ds = &der.ds_diag[1] - &der.ds_diag[0];
            let p = stage2.p[0].at(t);
            let xs = &x[0] * s * &p;
            let d = co.a.transpose() * &x[0] + &x[0] * &co.a + &xs + xs.transpose() + &p * ds * &p + &der.dq[0];
            Ok(vec![-d])
        },
        vec![DMatrix::zeros(n, n)],
        grid,
        DEFAULT_BLOWUP_THRESHOLD,
        ode::symmetrize_all,
    )?;
    Ok(paths.remove(0))
}

/// Differentiated zero-sum Riccati equation
/// `Ṗ_k + AᵀP_k + P_kA + P_kS̃P + PS̃P_k + PS̃_kP + Q_k = 0`, `P_k(T) = 0`.
pub fn solve_zerosum_sensitivity(
    game: &ConfigGame,
    k: usize,
    stage2: &StageTwoSolution,
    grid: &TimeGrid,
) -> Result<MatrixPath> {
    if !game.is_zero_sum() {
        return Err(Error::PreconditionViolation("game is not zero-sum".into()));
    }
    let dt = derivative_table(game, stage2, k, grid)?;
    zerosum_flow(game, k, stage2, &dt, grid)
}

/// All derivative paths with respect to `θ^k` for a solved Stage 2.
pub fn sensitivity(game: &ConfigGame, k: usize, stage2: &StageTwoSolution, grid: &TimeGrid) -> Result<SensitivityBundle> {
    let players = game.players();
    let n = game.state_dim();
    if k >= players {
        return Err(Error::PreconditionViolation(format!("parameter index {k} out of range")));
    }
    let theta = &stage2.theta;
    let regularization: Vec<f64> = (0..players)
        .map(|i| game.regularizer().map_or(0.0, |r| r.gradient(i, theta)[k]))
        .collect();
    let wrap = |e: Error| Error::infeasible(theta, e);
    let (p, zeta, eta, beta) = if !game.depends_on(k) {
        (
            vec![MatrixPath::zeros(*grid, n, n); players],
            vec![MatrixPath::zeros(*grid, n, 1); players],
            vec![MatrixPath::zeros(*grid, 1, 1); players],
            MatrixPath::zeros(*grid, n, 1),
        )
    } else {
        let dt = derivative_table(game, stage2, k, grid)?;
        if game.is_zero_sum() {
            let pk = zerosum_flow(game, k, stage2, &dt, grid).map_err(wrap)?;
            let neg = pk.scaled(-1.0);
            (
                vec![pk, neg],
                vec![MatrixPath::zeros(*grid, n, 1); players],
                vec![MatrixPath::zeros(*grid, 1, 1); players],
                MatrixPath::zeros(*grid, n, 1),
            )
        } else {
            let p = p_flow(game, k, stage2, &dt, grid).map_err(wrap)?;
            let (zeta, beta) = zeta_flow(game, k, stage2, &dt, &p, grid).map_err(wrap)?;
            let eta = eta_flow(game, k, stage2, &dt, &zeta, grid).map_err(wrap)?;
            (p, zeta, eta, beta)
        }
    };
    let mut bundle = SensitivityBundle {
        theta: theta.clone(),
        k,
        p,
        zeta,
        eta,
        beta,
        d_value: Vec::new(),
        regularization,
    };
    bundle.d_value = (0..players).map(|i| bundle.d_value_at(game.x0(), i)).collect();
    Ok(bundle)
}

/// Values and the partial derivatives `dJ^i/dθ^k` of every player for one `k`.
pub fn value_and_partial(
    game: &ConfigGame,
    theta: &[f64],
    x0: &DVector<f64>,
    k: usize,
    grid: &TimeGrid,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let stage2 = solve_stage_two(game, theta, grid)?;
    let bundle = sensitivity(game, k, &stage2, grid)?;
    let values = stage2.values_at(x0);
    let partial = (0..game.players()).map(|i| bundle.d_value_at(x0, i)).collect();
    Ok((values, partial))
}

/// Values and full gradients; `gradient[i][k] = dJ^i/dθ^k`.
pub fn value_and_gradient(
    game: &ConfigGame,
    theta: &[f64],
    x0: &DVector<f64>,
    grid: &TimeGrid,
) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let players = game.players();
    let stage2 = solve_stage_two(game, theta, grid)?;
    let mut gradient = vec![vec![0.0; players]; players];
    for k in 0..players {
        let bundle = sensitivity(game, k, &stage2, grid)?;
        for (i, row) in gradient.iter_mut().enumerate() {
            row[k] = bundle.d_value_at(x0, i);
        }
    }
    Ok((stage2.values_at(x0), gradient))
}

/// `∇_θ J^i` for every player; `result[i][k] = dJ^i/dθ^k`.
pub fn value_gradient(game: &ConfigGame, theta: &[f64], x0: &DVector<f64>, grid: &TimeGrid) -> Result<Vec<Vec<f64>>> {
    Ok(value_and_gradient(game, theta, x0, grid)?.1)
}

/// Directional derivative `D_θ J^i [h] = Σ_k h_k dJ^i/dθ^k`.
pub fn directional_derivative(
    game: &ConfigGame,
    theta: &[f64],
    h: &[f64],
    x0: &DVector<f64>,
    grid: &TimeGrid,
) -> Result<Vec<f64>> {
    if h.len() != game.players() {
        return Err(Error::PreconditionViolation("direction has the wrong length".into()));
    }
    let gradient = value_gradient(game, theta, x0, grid)?;
    Ok(gradient
        .iter()
        .map(|row| row.iter().zip(h).map(|(g, hk)| g * hk).sum())
        .collect())
}

/// One-sided difference quotient `[J^i(θ + εh) − J^i(θ)]/ε`.
pub fn difference_quotient(
    game: &ConfigGame,
    theta: &[f64],
    h: &[f64],
    eps: f64,
    x0: &DVector<f64>,
    grid: &TimeGrid,
) -> Result<Vec<f64>> {
    let base = solve_stage_two(game, theta, grid)?.values_at(x0);
    let moved: Vec<f64> = theta.iter().zip(h).map(|(t, d)| t + eps * d).collect();
    let shifted = solve_stage_two(game, &moved, grid)?.values_at(x0);
    Ok(shifted.iter().zip(&base).map(|(a, b)| (a - b) / eps).collect())
}

/// Central finite-difference gradient of the Stage-2 values; an oracle that
/// shares no code with the sensitivity equations.
pub fn finite_difference_gradient(
    game: &ConfigGame,
    theta: &[f64],
    x0: &DVector<f64>,
    grid: &TimeGrid,
    step: f64,
) -> Result<Vec<Vec<f64>>> {
    let players = game.players();
    let mut gradient = vec![vec![0.0; players]; players];
    for k in 0..players {
        let mut plus = theta.to_vec();
        plus[k] += step;
        let mut minus = theta.to_vec();
        minus[k] -= step;
        let vp = solve_stage_two(game, &plus, grid)?.values_at(x0);
        let vm = solve_stage_two(game, &minus, grid)?.values_at(x0);
        for i in 0..players {
            gradient[i][k] = (vp[i] - vm[i]) / (2.0 * step);
        }
    }
    Ok(gradient)
}

/// Own-parameter derivative `dJ^i/dθ^i` of an LQ game written as an integral
/// along the equilibrium trajectory:
///
/// ```text
/// ½ ∫ x*ᵀQ^i_i x* + 2x*ᵀP^iB^i_i u^i* + Σ_{j≠i} (2u^j*ᵀR^{ij} ∂u^j + 2x*ᵀP^iB^j ∂u^j) dt
/// ```
///
/// with `∂u^j = −(R^{jj})⁻¹B^{jᵀ}P^j_i x*`, evaluated by Simpson quadrature.
pub fn envelope_gradient(game: &ConfigGame, theta: &[f64], i: usize, grid: &TimeGrid) -> Result<f64> {
    if game.is_affine() {
        return Err(Error::PreconditionViolation("the envelope form requires c ≡ 0".into()));
    }
    let players = game.players();
    let stage2 = solve_stage_two(game, theta, grid)?;
    let bundle = sensitivity(game, i, &stage2, grid)?;
    let roll = riccati::rollout(game, &stage2, grid)?;
    let mut failure = None;
    let integral = ode::quadrature(
        |t| {
            let eval = || -> Result<f64> {
                let x = roll.x.at(t);
                let u = riccati::controls_at(game, &stage2, &x, t)?;
                let pi = stage2.p[i].at(t);
                let pix = pi.transpose() * &x;
                let mut l = x.dot(&(game.q_deriv(i, t, theta, i) * &x));
                l += 2.0 * pix.dot(&(game.b_deriv(i, t, theta, i) * &u[i]));
                for j in (0..players).filter(|&j| j != i) {
                    let du = -(game.gain(j, t, theta)? * (bundle.p[j].at(t) * &x));
                    l += 2.0 * u[j].dot(&(game.r(i, j, t) * &du));
                    l += 2.0 * pix.dot(&(game.b(j, t, theta) * &du));
                }
                Ok(l)
            };
            match eval() {
                Ok(v) => v,
                Err(e) => {
                    failure = Some(e);
                    f64::NAN
                }
            }
        },
        grid,
    );
    if let Some(e) = failure {
        return Err(e);
    }
    let reg = game.regularizer().map_or(0.0, |r| r.gradient(i, theta)[i]);
    Ok(0.5 * integral? + reg)
}
