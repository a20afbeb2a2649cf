#![allow(dead_code)]

use confgames_core::{ConfigGame, Dependence, GameSpec, MatrixFn, ParamBox};
use nalgebra::{DMatrix, DVector};

pub fn scalar(v: f64) -> DMatrix<f64> {
    DMatrix::from_element(1, 1, v)
}

/// `ẋ = θu`, cost `½∫ q x² + u² dt`, horizon `T`.
pub fn scalar_lqr(q: f64, horizon: f64, x0: f64, lo: f64, hi: f64) -> ConfigGame {
    ConfigGame::new(GameSpec {
        horizon,
        a: MatrixFn::zeros(1, 1),
        b: vec![MatrixFn::parametrized(
            1,
            1,
            Dependence::Player(0),
            |_, th| scalar(th[0]),
            |_, _, _| scalar(1.0),
        )],
        q: vec![MatrixFn::constant(scalar(q))],
        r: vec![vec![MatrixFn::identity(1)]],
        c: MatrixFn::zeros(1, 1),
        qf: vec![scalar(0.0)],
        theta_box: vec![ParamBox::new(lo, hi).unwrap()],
        x0: DVector::from_element(1, x0),
        regularizer: None,
        zero_sum: false,
    })
    .unwrap()
}

/// Closed form `J(θ) = ½x0² tanh(θT)/θ` of [`scalar_lqr`] with `q = 1`.
pub fn scalar_value(theta: f64, horizon: f64, x0: f64) -> f64 {
    0.5 * x0 * x0 * (theta * horizon).tanh() / theta
}

/// `dJ/dθ` of [`scalar_value`].
pub fn scalar_gradient(theta: f64, horizon: f64, x0: f64) -> f64 {
    let th = (theta * horizon).tanh();
    let sech2 = 1.0 - th * th;
    0.5 * x0 * x0 * (horizon * sech2 / theta - th / (theta * theta))
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    let diff = (a - b).abs();
    if diff <= 1e-10 {
        0.0
    } else {
        diff / a.abs().max(b.abs())
    }
}

/// Points `lo + (hi − lo)(j + 1)/(count + 1)`, strictly inside the box.
pub fn interior(bx: &ParamBox, count: usize) -> Vec<f64> {
    (1..=count).map(|j| bx.min + bx.width() * j as f64 / (count + 1) as f64).collect()
}
