//! Built-in games: planar pursuit–evasion, a two-car general-sum
//! interaction, and a seeded random AQ generator.

use std::f64::consts::FRAC_PI_2;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::game::{ConfigGame, Dependence, GameSpec, MatrixFn, ParamBox, Regularizer, ZeroSumSpec};
use crate::grid::{TimeGrid, DEFAULT_STEPS};
use crate::riccati::solve_stage_two;

/// Planar double-integrator pursuit–evasion. State is
/// `(p¹, v¹, p², v²)` with two-dimensional blocks; player 1 pursues.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PursuitEvasionSpec {
    pub kappa1: f64,
    pub kappa2: f64,
    pub kappa3: f64,
    pub horizon: f64,
    pub x0: Vec<f64>,
    pub theta_box: ParamBox,
}

impl Default for PursuitEvasionSpec {
    fn default() -> Self {
        Self {
            kappa1: 1.0,
            kappa2: 1.0,
            kappa3: 0.0005,
            horizon: 6.0,
            x0: vec![0.0, 0.0, 0.0, 0.0, 750.0, 750.0, 0.0, 0.0],
            theta_box: ParamBox { min: 0.0, max: FRAC_PI_2 },
        }
    }
}

/// Control authority `diag(1 + cos θ, 1 + sin θ)`.
pub fn heading_matrix(theta: f64) -> DMatrix<f64> {
    DMatrix::from_diagonal(&DVector::from_vec(vec![1.0 + theta.cos(), 1.0 + theta.sin()]))
}

fn heading_deriv(theta: f64) -> DMatrix<f64> {
    DMatrix::from_diagonal(&DVector::from_vec(vec![-theta.sin(), theta.cos()]))
}

fn pe_input(player: usize, kappa: f64) -> MatrixFn {
    let row = if player == 0 { 2 } else { 6 };
    let place = move |block: DMatrix<f64>| {
        let mut b = DMatrix::zeros(8, 2);
        b.view_mut((row, 0), (2, 2)).copy_from(&(block * kappa));
        b
    };
    MatrixFn::parametrized(
        8,
        2,
        Dependence::Player(player),
        move |_, th| place(heading_matrix(th[player])),
        move |_, th, _| place(heading_deriv(th[player])),
    )
}

/// Terminal weight `κ3 ‖p¹ − p²‖²` on the stacked state.
pub fn pursuit_terminal_weight(kappa3: f64) -> DMatrix<f64> {
    let mut qf = DMatrix::zeros(8, 8);
    for d in 0..2 {
        qf[(d, d)] = kappa3;
        qf[(4 + d, 4 + d)] = kappa3;
        qf[(d, 4 + d)] = -kappa3;
        qf[(4 + d, d)] = -kappa3;
    }
    qf
}

fn double_integrator_pair(dim: usize) -> DMatrix<f64> {
    let n = 4 * dim;
    let mut a = DMatrix::zeros(n, n);
    for block in 0..2 {
        for d in 0..dim {
            a[(2 * dim * block + d, 2 * dim * block + dim + d)] = 1.0;
        }
    }
    a
}

/// Builds the zero-sum pursuit–evasion game and checks that the Riccati flow
/// stays bounded at every corner of the parameter box.
pub fn build_pursuit_evasion(spec: &PursuitEvasionSpec) -> Result<ConfigGame> {
    for (name, v) in [("kappa1", spec.kappa1), ("kappa2", spec.kappa2), ("kappa3", spec.kappa3)] {
        if !(v.is_finite() && v > 0.0) {
            return Err(Error::InvalidGame(format!("{name} must be positive, got {v}")));
        }
    }
    if spec.x0.len() != 8 {
        return Err(Error::InvalidGame(format!("x0 needs 8 entries, got {}", spec.x0.len())));
    }
    let game = ConfigGame::zero_sum(ZeroSumSpec {
        horizon: spec.horizon,
        a: MatrixFn::constant(double_integrator_pair(2)),
        b1: pe_input(0, spec.kappa1),
        b2: pe_input(1, spec.kappa2),
        q: MatrixFn::zeros(8, 8),
        qf: pursuit_terminal_weight(spec.kappa3),
        theta_box: [spec.theta_box, spec.theta_box],
        x0: DVector::from_vec(spec.x0.clone()),
    })?;
    check_corners(&game)?;
    Ok(game)
}

fn check_corners(game: &ConfigGame) -> Result<()> {
    let grid = TimeGrid::new(game.horizon(), DEFAULT_STEPS)?;
    let boxes = game.theta_box();
    for mask in 0..(1usize << boxes.len()) {
        let corner: Vec<f64> = boxes
            .iter()
            .enumerate()
            .map(|(i, b)| if mask & (1 << i) == 0 { b.min } else { b.max })
            .collect();
        if let Err(e) = solve_stage_two(game, &corner, &grid) {
            return Err(Error::InvalidGame(format!(
                "Riccati flow unbounded at box corner {corner:?}: {e}"
            )));
        }
    }
    Ok(())
}

/// Two single-axis double integrators that prefer cruising speeds `v_o^i`
/// and are rewarded for separation until `switch_time`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GeneralSumSpec {
    pub q_v: f64,
    pub w_r: f64,
    /// Own-control weight `R^{ii}`.
    pub control_weight: f64,
    /// Separation weight before the switch.
    pub q_h_level: f64,
    pub switch_time: f64,
    pub v_o: [f64; 2],
    pub horizon: f64,
    /// Initial `(p¹, v¹, p², v²)` in original (unshifted) coordinates.
    pub x0: Vec<f64>,
    pub theta_box: [ParamBox; 2],
}

impl Default for GeneralSumSpec {
    fn default() -> Self {
        Self {
            q_v: 25.0,
            w_r: 0.02,
            control_weight: 2.0,
            q_h_level: 100.0,
            switch_time: 3.0,
            v_o: [0.1, 0.1],
            horizon: 0.5,
            x0: vec![0.0; 4],
            theta_box: [ParamBox { min: 0.1, max: 1.5 }; 2],
        }
    }
}

impl GeneralSumSpec {
    /// `Q_h(t) = level · (½ sign(switch − t) + ½)` with `sign(0) = 1`.
    pub fn q_h(&self, t: f64) -> f64 {
        let s = if self.switch_time - t >= 0.0 { 1.0 } else { -1.0 };
        self.q_h_level * (0.5 * s + 0.5)
    }

    /// Shift `f = (0, v_o¹, 0, v_o²)` between original and game coordinates.
    pub fn offset(&self) -> DVector<f64> {
        DVector::from_vec(vec![0.0, self.v_o[0], 0.0, self.v_o[1]])
    }
}

/// State weight with `xᵀQx = −Q_h (p¹ − p²)² + Q_v (v¹² + v²²)`.
pub fn general_sum_state_weight(q_h: f64, q_v: f64) -> DMatrix<f64> {
    DMatrix::from_row_slice(
        4,
        4,
        &[
            -q_h, 0.0, q_h, 0.0, //
            0.0, q_v, 0.0, 0.0, //
            q_h, 0.0, -q_h, 0.0, //
            0.0, 0.0, 0.0, q_v,
        ],
    )
}

/// `w_r exp(−10 (θ¹ − θ²)²)`, shared by both players.
pub fn proximity_regularizer(w_r: f64) -> Regularizer {
    Regularizer::new(
        move |_, th| w_r * (-10.0 * (th[0] - th[1]).powi(2)).exp(),
        move |_, th| {
            let d = th[0] - th[1];
            let g = -20.0 * w_r * d * (-10.0 * d * d).exp();
            vec![g, -g]
        },
    )
}

/// Builds the general-sum game in shifted coordinates `x̃ = x − f`.
pub fn build_general_sum(spec: &GeneralSumSpec) -> Result<ConfigGame> {
    if spec.x0.len() != 4 {
        return Err(Error::InvalidGame(format!("x0 needs 4 entries, got {}", spec.x0.len())));
    }
    let a = double_integrator_pair(1);
    let f = spec.offset();
    let c = &a * &f;
    let input = |player: usize| {
        let row = 2 * player + 1;
        let unit = move || {
            let mut b = DMatrix::zeros(4, 1);
            b[(row, 0)] = 1.0;
            b
        };
        MatrixFn::parametrized(4, 1, Dependence::Player(player), move |_, th| unit() * th[player], move |_, _, _| unit())
    };
    let weight = {
        let s = spec.clone();
        MatrixFn::time_varying(4, 4, move |t| general_sum_state_weight(s.q_h(t), s.q_v))
    };
    let own = || MatrixFn::constant(DMatrix::from_element(1, 1, spec.control_weight));
    let zero = || MatrixFn::zeros(1, 1);
    let game = ConfigGame::new(GameSpec {
        horizon: spec.horizon,
        a: MatrixFn::constant(a),
        b: vec![input(0), input(1)],
        q: vec![weight.clone(), weight],
        r: vec![vec![own(), zero()], vec![zero(), own()]],
        c: MatrixFn::constant(DMatrix::from_column_slice(4, 1, c.as_slice())),
        qf: vec![DMatrix::zeros(4, 4); 2],
        theta_box: spec.theta_box.to_vec(),
        x0: DVector::from_vec(spec.x0.clone()) - f,
        regularizer: (spec.w_r != 0.0).then(|| proximity_regularizer(spec.w_r)),
        zero_sum: false,
    })?;
    check_corners(&game)?;
    Ok(game)
}

/// Options for [`random_aq_game`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct RandomGameSpec {
    pub seed: u64,
    pub players: usize,
    pub state_dim: usize,
    pub control_dim: usize,
    /// Adds a time-varying drift `c(t)`.
    pub affine: bool,
    /// When false, no coefficient depends on θ.
    pub theta_dependent: bool,
}

impl RandomGameSpec {
    pub fn new(seed: u64, players: usize, state_dim: usize, control_dim: usize) -> Self {
        Self {
            seed,
            players,
            state_dim,
            control_dim,
            affine: true,
            theta_dependent: true,
        }
    }
}

const MAX_ATTEMPTS: usize = 100;

fn uniform(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| scale * rng.random_range(-1.0..1.0))
}

fn draw_game(rng: &mut ChaCha8Rng, spec: &RandomGameSpec) -> Result<ConfigGame> {
    let (players, n, m) = (spec.players, spec.state_dim, spec.control_dim);
    let mut a = uniform(rng, n, n, 1.0);
    let norm = a.norm();
    if norm > 1.0 {
        // Frobenius norm bounds the spectral radius
        a /= norm;
    }
    let mut b = Vec::with_capacity(players);
    let mut q = Vec::with_capacity(players);
    let mut qf = Vec::with_capacity(players);
    for i in 0..players {
        let b0 = uniform(rng, n, m, 1.0);
        let b1 = uniform(rng, n, m, 0.5);
        let l = uniform(rng, n, n, 1.0);
        let base = &l * l.transpose();
        let mm = uniform(rng, n, n, 0.5);
        let bump = &mm * mm.transpose();
        let weights: Vec<f64> = (0..players).map(|_| rng.random_range(0.0..1.0)).collect();
        let g = uniform(rng, n, n, 0.5);
        qf.push(&g * g.transpose());
        if spec.theta_dependent {
            let (b0c, b1c) = (b0.clone(), b1.clone());
            b.push(MatrixFn::parametrized(
                n,
                m,
                Dependence::Player(i),
                move |_, th| &b0c + &b1c * th[i],
                move |_, _, _| b1.clone(),
            ));
            let (w, bp) = (weights.clone(), bump.clone());
            q.push(MatrixFn::parametrized(
                n,
                n,
                Dependence::All,
                move |_, th| &base + &bp * th.iter().zip(&w).map(|(t, w)| t * w).sum::<f64>(),
                move |_, _, k| &bump * weights[k],
            ));
        } else {
            b.push(MatrixFn::constant(b0));
            q.push(MatrixFn::constant(base));
        }
    }
    let r = (0..players)
        .map(|i| {
            (0..players)
                .map(|j| if i == j { MatrixFn::identity(m) } else { MatrixFn::zeros(m, m) })
                .collect()
        })
        .collect();
    let c = if spec.affine {
        let c0 = uniform(rng, n, 1, 1.0);
        let c1 = uniform(rng, n, 1, 1.0);
        MatrixFn::time_varying(n, 1, move |t| &c0 + &c1 * (2.0 * t).sin())
    } else {
        MatrixFn::zeros(n, 1)
    };
    let x0 = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
    ConfigGame::new(GameSpec {
        horizon: 1.0,
        a: MatrixFn::constant(a),
        b,
        q,
        r,
        c,
        qf,
        theta_box: vec![ParamBox { min: 0.5, max: 1.5 }; players],
        x0,
        regularizer: None,
        zero_sum: false,
    })
}

/// Deterministic pseudo-random AQ game; redraws until the Riccati flow is
/// bounded at every corner of the parameter box.
pub fn random_aq_game(spec: &RandomGameSpec) -> Result<ConfigGame> {
    if !(1..=3).contains(&spec.players) || !(1..=6).contains(&spec.state_dim) || !(1..=2).contains(&spec.control_dim) {
        return Err(Error::PreconditionViolation(format!(
            "random games need 1 ≤ N ≤ 3, 1 ≤ n ≤ 6, 1 ≤ m ≤ 2, got {spec:?}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    for attempt in 0..MAX_ATTEMPTS {
        let game = draw_game(&mut rng, spec)?;
        match check_corners(&game) {
            Ok(()) => return Ok(game),
            Err(e) => log::debug!("random game attempt {attempt} rejected: {e}"),
        }
    }
    Err(Error::GenerationFailed { attempts: MAX_ATTEMPTS })
}
