//! Parametrized affine-quadratic games of configuration.
//!
//! A [`ConfigGame`] bundles every coefficient of an N-player finite-horizon game
//!
//! ```text
//! ẋ = A(t) x + Σ_i B^i(t; θ^i) u^i + c(t),          x(0) = x0
//! J^i = ½ ∫ xᵀQ^i(t; θ)x + Σ_j u^jᵀ R^{ij}(t) u^j dt + ½ x(T)ᵀ Qf^i x(T) + r^i(θ)
//! ```
//!
//! where every player owns one scalar configuration parameter `θ^i` drawn from
//! a closed interval.

use std::fmt;
use std::sync::Arc;

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::error::{Error, Result};

type ValueFn = Arc<dyn Fn(f64, &[f64]) -> DMatrix<f64> + Send + Sync>;
type DerivFn = Arc<dyn Fn(f64, &[f64], usize) -> DMatrix<f64> + Send + Sync>;

/// Which configuration parameters a coefficient depends on.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Dependence {
    None,
    Player(usize),
    All,
}

impl Dependence {
    pub fn includes(&self, k: usize) -> bool {
        match *self {
            Dependence::None => false,
            Dependence::Player(i) => i == k,
            Dependence::All => true,
        }
    }
}

/// A matrix-valued coefficient `M(t; θ)` together with its analytic
/// parameter derivatives.
#[derive(Clone)]
pub struct MatrixFn {
    rows: usize,
    cols: usize,
    dependence: Dependence,
    value: ValueFn,
    deriv: Option<DerivFn>,
}

impl fmt::Debug for MatrixFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MatrixFn")
            .field("shape", &(self.rows, self.cols))
            .field("dependence", &self.dependence)
            .finish()
    }
}

impl MatrixFn {
    pub fn constant(m: DMatrix<f64>) -> Self {
        let (rows, cols) = m.shape();
        Self {
            rows,
            cols,
            dependence: Dependence::None,
            value: Arc::new(move |_, _| m.clone()),
            deriv: None,
        }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::constant(DMatrix::zeros(rows, cols))
    }

    pub fn identity(n: usize) -> Self {
        Self::constant(DMatrix::identity(n, n))
    }

    /// A θ-independent function of time.
    pub fn time_varying<F>(rows: usize, cols: usize, f: F) -> Self
    where
        F: Fn(f64) -> DMatrix<f64> + Send + Sync + 'static,
    {
        Self {
            rows,
            cols,
            dependence: Dependence::None,
            value: Arc::new(move |t, _| f(t)),
            deriv: None,
        }
    }

    /// A θ-dependent function with analytic derivative `deriv(t, θ, k) = ∂M/∂θ^k`.
    ///
    /// `deriv` is only called for indices covered by `dependence`.
    pub fn parametrized<F, D>(rows: usize, cols: usize, dependence: Dependence, value: F, deriv: D) -> Self
    where
        F: Fn(f64, &[f64]) -> DMatrix<f64> + Send + Sync + 'static,
        D: Fn(f64, &[f64], usize) -> DMatrix<f64> + Send + Sync + 'static,
    {
        Self {
            rows,
            cols,
            dependence,
            value: Arc::new(value),
            deriv: Some(Arc::new(deriv)),
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn dependence(&self) -> Dependence {
        self.dependence
    }

    pub fn depends_on(&self, k: usize) -> bool {
        self.dependence.includes(k) && self.deriv.is_some()
    }

    pub fn evaluate(&self, t: f64, theta: &[f64]) -> DMatrix<f64> {
        let m = (self.value)(t, theta);
        debug_assert_eq!(m.shape(), (self.rows, self.cols));
        m
    }

    /// `∂M/∂θ^k`; all zeros when the function is independent of `θ^k`.
    pub fn derivative_wrt_param(&self, t: f64, theta: &[f64], k: usize) -> DMatrix<f64> {
        match &self.deriv {
            Some(d) if self.dependence.includes(k) => d(t, theta, k),
            _ => DMatrix::zeros(self.rows, self.cols),
        }
    }
}

/// Closed parameter interval `[min, max]` owned by one player.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize)]
pub struct ParamBox {
    pub min: f64,
    pub max: f64,
}

impl ParamBox {
    pub fn new(min: f64, max: f64) -> Result<Self> {
        if !(min.is_finite() && max.is_finite() && min <= max) {
            return Err(Error::InvalidGame(format!("empty parameter interval [{min}, {max}]")));
        }
        Ok(Self { min, max })
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.min && x <= self.max
    }

    pub fn project(&self, x: f64) -> f64 {
        x.clamp(self.min, self.max)
    }

    pub fn is_endpoint(&self, x: f64) -> bool {
        x <= self.min || x >= self.max
    }

    pub fn width(&self) -> f64 {
        self.max - self.min
    }
}

type RegValueFn = Arc<dyn Fn(usize, &[f64]) -> f64 + Send + Sync>;
type RegGradFn = Arc<dyn Fn(usize, &[f64]) -> Vec<f64> + Send + Sync>;

/// A control-independent additive Stage-1 cost `r^i(θ)` with analytic gradient.
#[derive(Clone)]
pub struct Regularizer {
    value: RegValueFn,
    gradient: RegGradFn,
}

impl fmt::Debug for Regularizer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("Regularizer")
    }
}

impl Regularizer {
    pub fn new<F, G>(value: F, gradient: G) -> Self
    where
        F: Fn(usize, &[f64]) -> f64 + Send + Sync + 'static,
        G: Fn(usize, &[f64]) -> Vec<f64> + Send + Sync + 'static,
    {
        Self {
            value: Arc::new(value),
            gradient: Arc::new(gradient),
        }
    }

    pub fn value(&self, player: usize, theta: &[f64]) -> f64 {
        (self.value)(player, theta)
    }

    pub fn gradient(&self, player: usize, theta: &[f64]) -> Vec<f64> {
        (self.gradient)(player, theta)
    }
}

/// Raw ingredients of a game; validated by [`ConfigGame::new`].
#[derive(Clone, Debug)]
pub struct GameSpec {
    pub horizon: f64,
    pub a: MatrixFn,
    pub b: Vec<MatrixFn>,
    pub q: Vec<MatrixFn>,
    /// `r[i][j]` is player i's weight on player j's control (`m_j × m_j`).
    pub r: Vec<Vec<MatrixFn>>,
    pub c: MatrixFn,
    pub qf: Vec<DMatrix<f64>>,
    pub theta_box: Vec<ParamBox>,
    pub x0: DVector<f64>,
    pub regularizer: Option<Regularizer>,
    pub zero_sum: bool,
}

/// Inputs for a two-player zero-sum LQ game. Player 1 minimizes and player 2
/// maximizes `½∫ xᵀQx + ‖u¹‖² − ‖u²‖² dt + ½x(T)ᵀQf x(T)`.
#[derive(Clone, Debug)]
pub struct ZeroSumSpec {
    pub horizon: f64,
    pub a: MatrixFn,
    pub b1: MatrixFn,
    pub b2: MatrixFn,
    pub q: MatrixFn,
    pub qf: DMatrix<f64>,
    pub theta_box: [ParamBox; 2],
    pub x0: DVector<f64>,
}

/// A validated N-player AQ game of configuration.
#[derive(Clone, Debug)]
pub struct ConfigGame {
    n: usize,
    control_dims: Vec<usize>,
    horizon: f64,
    a: MatrixFn,
    b: Vec<MatrixFn>,
    q: Vec<MatrixFn>,
    r: Vec<Vec<MatrixFn>>,
    c: MatrixFn,
    qf: Vec<DMatrix<f64>>,
    theta_box: Vec<ParamBox>,
    x0: DVector<f64>,
    regularizer: Option<Regularizer>,
    zero_sum: bool,
    affine: bool,
}

const VALIDATION_SAMPLES: usize = 100;
const SYMMETRY_TOL: f64 = 1e-12;

fn asymmetry(m: &DMatrix<f64>) -> f64 {
    (m - m.transpose()).amax()
}

fn sym(m: DMatrix<f64>) -> DMatrix<f64> {
    let t = m.transpose();
    (m + t) * 0.5
}

impl ConfigGame {
    pub fn new(spec: GameSpec) -> Result<Self> {
        let GameSpec {
            horizon,
            a,
            b,
            q,
            r,
            c,
            qf,
            theta_box,
            x0,
            regularizer,
            zero_sum,
        } = spec;
        let players = b.len();
        if players == 0 {
            return Err(Error::InvalidGame("at least one player is required".into()));
        }
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::InvalidGame(format!("horizon must be positive, got {horizon}")));
        }
        let n = a.rows;
        if n == 0 || a.shape() != (n, n) {
            return Err(Error::InvalidGame(format!("A must be square, got {:?}", a.shape())));
        }
        if q.len() != players || r.len() != players || qf.len() != players || theta_box.len() != players {
            return Err(Error::InvalidGame("per-player coefficient counts disagree".into()));
        }
        if a.dependence() != Dependence::None || c.dependence() != Dependence::None {
            return Err(Error::InvalidGame("A and c must not depend on θ".into()));
        }
        let control_dims: Vec<usize> = b.iter().map(|bi| bi.cols).collect();
        for (i, bi) in b.iter().enumerate() {
            if bi.rows != n || bi.cols == 0 {
                return Err(Error::InvalidGame(format!("B^{} has shape {:?}", i + 1, bi.shape())));
            }
            if !matches!(bi.dependence(), Dependence::None) && bi.dependence() != Dependence::Player(i) {
                return Err(Error::InvalidGame(format!("B^{} may only depend on θ^{}", i + 1, i + 1)));
            }
            if q[i].shape() != (n, n) || qf[i].shape() != (n, n) {
                return Err(Error::InvalidGame(format!("Q^{0} and Qf^{0} must be {n}×{n}", i + 1)));
            }
            if r[i].len() != players {
                return Err(Error::InvalidGame(format!("R^{} needs {players} blocks", i + 1)));
            }
            for (j, rij) in r[i].iter().enumerate() {
                if rij.shape() != (control_dims[j], control_dims[j]) {
                    return Err(Error::InvalidGame(format!(
                        "R^{}{} has shape {:?}, expected {}×{}",
                        i + 1,
                        j + 1,
                        rij.shape(),
                        control_dims[j],
                        control_dims[j]
                    )));
                }
                if rij.dependence() != Dependence::None {
                    return Err(Error::InvalidGame("R must not depend on θ".into()));
                }
            }
            if asymmetry(&qf[i]) > SYMMETRY_TOL * (1.0 + qf[i].amax()) {
                return Err(Error::InvalidGame(format!("Qf^{} is not symmetric", i + 1)));
            }
        }
        if c.shape() != (n, 1) || x0.len() != n {
            return Err(Error::InvalidGame("c and x0 must be n-vectors".into()));
        }
        if zero_sum && players != 2 {
            return Err(Error::InvalidGame("zero-sum games have exactly two players".into()));
        }
        for pb in &theta_box {
            ParamBox::new(pb.min, pb.max)?;
        }

        let qf = qf.into_iter().map(sym).collect();
        let mut game = Self {
            n,
            control_dims,
            horizon,
            a,
            b,
            q,
            r,
            c,
            qf,
            theta_box,
            x0,
            regularizer,
            zero_sum,
            affine: false,
        };
        game.validate_samples()?;
        Ok(game)
    }

    /// Builds the general-sum representation of a zero-sum game
    /// (`Q² = −Q`, `Qf² = −Qf`, `R^{ij} = (−1)^{i−j} I`) with the zero-sum flag set.
    pub fn zero_sum(spec: ZeroSumSpec) -> Result<Self> {
        let ZeroSumSpec {
            horizon,
            a,
            b1,
            b2,
            q,
            qf,
            theta_box,
            x0,
        } = spec;
        let n = a.rows;
        let (m1, m2) = (b1.cols, b2.cols);
        let neg_q = {
            let q = q.clone();
            let dq = q.clone();
            MatrixFn {
                rows: n,
                cols: n,
                dependence: q.dependence,
                value: Arc::new(move |t, th| -q.evaluate(t, th)),
                deriv: Some(Arc::new(move |t, th, k| -dq.derivative_wrt_param(t, th, k))),
            }
        };
        let r = vec![
            vec![MatrixFn::identity(m1), MatrixFn::constant(-DMatrix::identity(m2, m2))],
            vec![MatrixFn::constant(-DMatrix::identity(m1, m1)), MatrixFn::identity(m2)],
        ];
        Self::new(GameSpec {
            horizon,
            a,
            b: vec![b1, b2],
            q: vec![q, neg_q],
            r,
            c: MatrixFn::zeros(n, 1),
            qf: vec![qf.clone(), -qf],
            theta_box: theta_box.to_vec(),
            x0,
            regularizer: None,
            zero_sum: true,
        })
    }

    fn validate_samples(&mut self) -> Result<()> {
        let corners: Vec<Vec<f64>> = vec![
            self.theta_box.iter().map(|b| b.min).collect(),
            self.theta_box.iter().map(|b| 0.5 * (b.min + b.max)).collect(),
            self.theta_box.iter().map(|b| b.max).collect(),
        ];
        let mut warned = false;
        for s in 0..=VALIDATION_SAMPLES {
            let t = self.horizon * s as f64 / VALIDATION_SAMPLES as f64;
            if self.c.evaluate(t, &corners[0]).amax() != 0.0 {
                self.affine = true;
            }
            for i in 0..self.players() {
                let rii = self.r[i][i].evaluate(t, &corners[0]);
                if asymmetry(&rii) > SYMMETRY_TOL * (1.0 + rii.amax()) || Cholesky::new(rii).is_none() {
                    return Err(Error::PositiveDefinitenessViolation(format!(
                        "R^{0}{0}(t = {t}) is not symmetric positive definite",
                        i + 1
                    )));
                }
                for theta in &corners {
                    let qi = self.q[i].evaluate(t, theta);
                    if asymmetry(&qi) > SYMMETRY_TOL * (1.0 + qi.amax()) {
                        return Err(Error::InvalidGame(format!("Q^{}(t = {t}) is not symmetric", i + 1)));
                    }
                    if !warned && !self.zero_sum {
                        let min_eig = sym(qi).symmetric_eigenvalues().min();
                        if min_eig < -1e-10 {
                            log::warn!(
                                "Q^{} is indefinite (min eigenvalue {min_eig:.3e} at t = {t}); \
                                 relying on blow-up detection",
                                i + 1
                            );
                            warned = true;
                        }
                    }
                }
            }
            if self.zero_sum {
                let th = &corners[1];
                let ok = (self.r[0][0].evaluate(t, th) - DMatrix::identity(self.control_dims[0], self.control_dims[0]))
                    .amax()
                    == 0.0
                    && (self.r[1][1].evaluate(t, th) - DMatrix::identity(self.control_dims[1], self.control_dims[1]))
                        .amax()
                        == 0.0
                    && (self.r[0][1].evaluate(t, th) + DMatrix::identity(self.control_dims[1], self.control_dims[1]))
                        .amax()
                        == 0.0
                    && (self.r[1][0].evaluate(t, th) + DMatrix::identity(self.control_dims[0], self.control_dims[0]))
                        .amax()
                        == 0.0
                    && (self.q[0].evaluate(t, th) + self.q[1].evaluate(t, th)).amax() == 0.0;
                if !ok || self.affine {
                    return Err(Error::InvalidGame(
                        "zero-sum games need R^{ij} = (−1)^{i−j} I, Q² = −Q¹ and c ≡ 0".into(),
                    ));
                }
            }
        }
        if self.zero_sum && (&self.qf[0] + &self.qf[1]).amax() != 0.0 {
            return Err(Error::InvalidGame("zero-sum games need Qf² = −Qf¹".into()));
        }
        Ok(())
    }

    pub fn players(&self) -> usize {
        self.b.len()
    }

    pub fn state_dim(&self) -> usize {
        self.n
    }

    pub fn control_dims(&self) -> &[usize] {
        &self.control_dims
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn theta_box(&self) -> &[ParamBox] {
        &self.theta_box
    }

    pub fn x0(&self) -> &DVector<f64> {
        &self.x0
    }

    pub fn regularizer(&self) -> Option<&Regularizer> {
        self.regularizer.as_ref()
    }

    pub fn is_zero_sum(&self) -> bool {
        self.zero_sum
    }

    /// True when the drift `c` is nonzero somewhere (AQ rather than LQ).
    pub fn is_affine(&self) -> bool {
        self.affine
    }

    pub fn qf(&self, i: usize) -> &DMatrix<f64> {
        &self.qf[i]
    }

    pub fn with_x0(&self, x0: DVector<f64>) -> Self {
        assert_eq!(x0.len(), self.n);
        Self { x0, ..self.clone() }
    }

    pub fn without_regularizer(&self) -> Self {
        Self {
            regularizer: None,
            ..self.clone()
        }
    }

    /// The same game with the zero-sum flag cleared, so it is solved through
    /// the N-player coupled equations.
    pub fn as_general_sum(&self) -> Self {
        Self {
            zero_sum: false,
            ..self.clone()
        }
    }

    pub fn contains(&self, theta: &[f64]) -> bool {
        theta.len() == self.players() && theta.iter().zip(&self.theta_box).all(|(x, b)| b.contains(*x))
    }

    pub fn check_theta(&self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.players() {
            return Err(Error::PreconditionViolation(format!(
                "expected {} parameters, got {}",
                self.players(),
                theta.len()
            )));
        }
        if !self.contains(theta) {
            return Err(Error::PreconditionViolation(format!("θ = {theta:?} lies outside the parameter box")));
        }
        Ok(())
    }

    pub fn a(&self, t: f64) -> DMatrix<f64> {
        self.a.evaluate(t, &[])
    }

    pub fn b(&self, i: usize, t: f64, theta: &[f64]) -> DMatrix<f64> {
        self.b[i].evaluate(t, theta)
    }

    pub fn b_deriv(&self, i: usize, t: f64, theta: &[f64], k: usize) -> DMatrix<f64> {
        self.b[i].derivative_wrt_param(t, theta, k)
    }

    pub fn b_fn(&self, i: usize) -> &MatrixFn {
        &self.b[i]
    }

    pub fn q_fn(&self, i: usize) -> &MatrixFn {
        &self.q[i]
    }

    /// Symmetrized `Q^i(t; θ)`.
    pub fn q(&self, i: usize, t: f64, theta: &[f64]) -> DMatrix<f64> {
        let m = self.q[i].evaluate(t, theta);
        debug_assert!(asymmetry(&m) <= SYMMETRY_TOL * (1.0 + m.amax()));
        sym(m)
    }

    pub fn q_deriv(&self, i: usize, t: f64, theta: &[f64], k: usize) -> DMatrix<f64> {
        sym(self.q[i].derivative_wrt_param(t, theta, k))
    }

    pub fn r(&self, i: usize, j: usize, t: f64) -> DMatrix<f64> {
        self.r[i][j].evaluate(t, &[])
    }

    pub fn c(&self, t: f64) -> DVector<f64> {
        self.c.evaluate(t, &[]).column(0).into_owned()
    }

    /// Whether any coefficient depends on `θ^k`.
    pub fn depends_on(&self, k: usize) -> bool {
        self.b.iter().any(|b| b.depends_on(k)) || self.q.iter().any(|q| q.depends_on(k))
    }

    fn r_inv(&self, j: usize, t: f64) -> Result<DMatrix<f64>> {
        let rjj = self.r(j, j, t);
        Cholesky::new(rjj).map(|c| c.inverse()).ok_or_else(|| {
            Error::PositiveDefinitenessViolation(format!("R^{0}{0}(t = {t}) is not positive definite", j + 1))
        })
    }

    /// Feedback gain factor `(R^{ii})⁻¹ B^{iᵀ}` so that `u^i = −K (P^i x + ζ^i)`.
    pub fn gain(&self, i: usize, t: f64, theta: &[f64]) -> Result<DMatrix<f64>> {
        Ok(self.r_inv(i, t)? * self.b(i, t, theta).transpose())
    }

    /// Snapshot of all coefficients entering the Riccati flows at one instant.
    pub fn coefficients(&self, t: f64, theta: &[f64]) -> Result<Coefficients> {
        let players = self.players();
        let mut inputs = Vec::with_capacity(players);
        let mut gain = Vec::with_capacity(players);
        for j in 0..players {
            let rinv = self.r_inv(j, t)?;
            let bj = self.b(j, t, theta);
            gain.push(&rinv * bj.transpose());
            inputs.push((bj, rinv));
        }
        let s: Vec<Vec<DMatrix<f64>>> = (0..players)
            .map(|i| {
                inputs
                    .iter()
                    .enumerate()
                    .map(|(j, (bj, rinv))| sym(bj * (rinv * self.r(i, j, t) * rinv) * bj.transpose()))
                    .collect()
            })
            .collect();
        let s_tilde = self.zero_sum.then(|| &s[1][1] - &s[0][0]);
        Ok(Coefficients {
            a: self.a(t),
            q: (0..players).map(|i| self.q(i, t, theta)).collect(),
            c: DMatrix::from_column_slice(self.n, 1, self.c(t).as_slice()),
            s,
            s_tilde,
            gain,
        })
    }

    /// Parameter derivatives entering the sensitivity flows for `θ^k`.
    pub fn coefficient_derivatives(&self, t: f64, theta: &[f64], k: usize) -> Result<CoefficientDerivatives> {
        let players = self.players();
        let ds = (0..players)
            .map(|i| compute_s_deriv(self, i, k, t, theta, k))
            .collect::<Result<Vec<_>>>()?;
        let ds_diag = (0..players)
            .map(|j| compute_s_deriv(self, j, j, t, theta, k))
            .collect::<Result<Vec<_>>>()?;
        Ok(CoefficientDerivatives {
            ds,
            ds_diag,
            dq: (0..players).map(|i| self.q_deriv(i, t, theta, k)).collect(),
        })
    }
}

/// Coefficients of the game evaluated at one `(t, θ)`.
#[derive(Clone, Debug)]
pub struct Coefficients {
    pub a: DMatrix<f64>,
    /// `s[i][j] = S^{ij}`
    pub s: Vec<Vec<DMatrix<f64>>>,
    /// `S̃ = S^{22} − S^{11}` for zero-sum games.
    pub s_tilde: Option<DMatrix<f64>>,
    pub q: Vec<DMatrix<f64>>,
    /// Drift as an `n × 1` matrix.
    pub c: DMatrix<f64>,
    /// `gain[i] = (R^{ii})⁻¹B^{iᵀ}`
    pub gain: Vec<DMatrix<f64>>,
}

/// Derivatives of the coefficients with respect to one parameter `θ^k`.
#[derive(Clone, Debug)]
pub struct CoefficientDerivatives {
    /// `ds[i] = ∂S^{ik}/∂θ^k`; every `∂S^{ij}` with `j ≠ k` vanishes.
    pub ds: Vec<DMatrix<f64>>,
    /// `ds_diag[j] = ∂S^{jj}/∂θ^k` (nonzero only for `j = k`).
    pub ds_diag: Vec<DMatrix<f64>>,
    /// `dq[i] = ∂Q^i/∂θ^k`
    pub dq: Vec<DMatrix<f64>>,
}

/// `S^{ij} = B^j (R^{jj})⁻¹ R^{ij} (R^{jj})⁻¹ B^{jᵀ}`.
pub fn compute_s(game: &ConfigGame, i: usize, j: usize, t: f64, theta: &[f64]) -> Result<DMatrix<f64>> {
    let rinv = game.r_inv(j, t)?;
    let bj = game.b(j, t, theta);
    let m = &rinv * game.r(i, j, t) * &rinv;
    Ok(sym(&bj * m * bj.transpose()))
}

/// `∂S^{ij}/∂θ^k`; nonzero only for `k = j` since `B^j` depends on `θ^j` alone.
pub fn compute_s_deriv(game: &ConfigGame, i: usize, j: usize, t: f64, theta: &[f64], k: usize) -> Result<DMatrix<f64>> {
    let n = game.state_dim();
    let rinv = game.r_inv(j, t)?;
    if k != j || !game.b[j].depends_on(k) {
        return Ok(DMatrix::zeros(n, n));
    }
    let bj = game.b(j, t, theta);
    let dbj = game.b_deriv(j, t, theta, k);
    let m = &rinv * game.r(i, j, t) * &rinv;
    let half = &dbj * m * bj.transpose();
    let t_half = half.transpose();
    Ok(half + t_half)
}

/// `F̃ = A − Σ_i S^{ii} P^i`.
pub fn closed_loop_matrix(game: &ConfigGame, theta: &[f64], p: &[DMatrix<f64>], t: f64) -> Result<DMatrix<f64>> {
    let mut f = game.a(t);
    for (i, pi) in p.iter().enumerate() {
        f -= compute_s(game, i, i, t, theta)? * pi;
    }
    Ok(f)
}
