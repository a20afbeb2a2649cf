use confgames_core::game::{closed_loop_matrix, compute_s, compute_s_deriv};
use confgames_core::scenarios::heading_matrix;
use confgames_core::*;
use nalgebra::{DMatrix, SymmetricEigen};

const H: f64 = 1e-5;

fn scenarios() -> Vec<ConfigGame> {
    vec![
        build_pursuit_evasion(&PursuitEvasionSpec::default()).unwrap(),
        build_general_sum(&GeneralSumSpec::default()).unwrap(),
        random_aq_game(&RandomGameSpec::new(42, 3, 4, 2)).unwrap(),
    ]
}

fn sample_points(game: &ConfigGame) -> Vec<(f64, Vec<f64>)> {
    let mut out = Vec::new();
    for a in 0..10 {
        let t = game.horizon() * a as f64 / 9.0;
        for b in 0..10 {
            let theta = game
                .theta_box()
                .iter()
                .enumerate()
                .map(|(i, bx)| bx.min + bx.width() * ((b + 3 * i) % 10) as f64 / 9.0)
                .collect();
            out.push((t, theta));
        }
    }
    out
}

fn central(f: impl Fn(&[f64]) -> DMatrix<f64>, theta: &[f64], k: usize) -> DMatrix<f64> {
    let mut plus = theta.to_vec();
    plus[k] += H;
    let mut minus = theta.to_vec();
    minus[k] -= H;
    (f(&plus) - f(&minus)) / (2.0 * H)
}

#[test]
fn analytic_parameter_derivatives_match_central_differences() {
    for game in scenarios() {
        for (t, theta) in sample_points(&game) {
            for k in 0..game.players() {
                for i in 0..game.players() {
                    let b = game.b_fn(i);
                    let fd = central(|th| b.evaluate(t, th), &theta, k);
                    let exact = b.derivative_wrt_param(t, &theta, k);
                    assert!((&exact - fd).amax() <= 1e-6 * (1.0 + b.evaluate(t, &theta).amax()));
                    let q = game.q_fn(i);
                    let fd = central(|th| q.evaluate(t, th), &theta, k);
                    let exact = q.derivative_wrt_param(t, &theta, k);
                    assert!((&exact - fd).amax() <= 1e-6 * (1.0 + q.evaluate(t, &theta).amax()));
                }
            }
        }
    }
}

#[test]
fn own_control_couplings_are_positive_semidefinite() {
    for game in scenarios() {
        for (t, theta) in sample_points(&game) {
            for j in 0..game.players() {
                let s = compute_s(&game, j, j, t, &theta).unwrap();
                let min = SymmetricEigen::new(s).eigenvalues.min();
                assert!(min >= -1e-10, "S^jj eigenvalue {min}");
            }
        }
    }
}

#[test]
fn coupling_derivative_vanishes_off_the_own_index() {
    for game in scenarios() {
        let (t, theta) = &sample_points(&game)[17];
        let players = game.players();
        for i in 0..players {
            for j in 0..players {
                for k in (0..players).filter(|&k| k != j) {
                    assert_eq!(compute_s_deriv(&game, i, j, *t, theta, k).unwrap().amax(), 0.0);
                }
            }
        }
    }
}

#[test]
fn pursuit_coupling_has_the_expected_velocity_block() {
    let game = build_pursuit_evasion(&PursuitEvasionSpec::default()).unwrap();
    let s = compute_s(&game, 0, 0, 0.0, &[0.0, 0.0]).unwrap();
    let mut expected = DMatrix::zeros(8, 8);
    expected[(2, 2)] = 4.0;
    expected[(3, 3)] = 1.0;
    assert!((s - expected).amax() <= 1e-15);
    assert_eq!(heading_matrix(std::f64::consts::FRAC_PI_2)[(0, 0)], 1.0 + std::f64::consts::FRAC_PI_2.cos());
    let theta = [std::f64::consts::FRAC_PI_4; 2];
    for i in 0..2 {
        for j in 0..2 {
            let fd = central(|th| compute_s(&game, i, j, 0.0, th).unwrap(), &theta, j);
            let exact = compute_s_deriv(&game, i, j, 0.0, &theta, j).unwrap();
            assert!((exact - fd).amax() <= 1e-8);
        }
    }
}

#[test]
fn general_sum_cross_couplings_vanish() {
    let game = build_general_sum(&GeneralSumSpec::default()).unwrap();
    assert_eq!(compute_s(&game, 0, 1, 0.1, &[0.6, 1.2]).unwrap().amax(), 0.0);
    assert_eq!(compute_s(&game, 1, 0, 0.1, &[0.6, 1.2]).unwrap().amax(), 0.0);
}

#[test]
fn closed_loop_matrix_matches_independent_recomputation() {
    let game = build_general_sum(&GeneralSumSpec::default()).unwrap();
    let theta = [0.6, 1.2];
    let grid = TimeGrid::new(game.horizon(), DEFAULT_STEPS).unwrap();
    let sol = solve_stage_two(&game, &theta, &grid).unwrap();
    let p: Vec<DMatrix<f64>> = sol.p.iter().map(|p| p.first().clone()).collect();
    let f = closed_loop_matrix(&game, &theta, &p, 0.0).unwrap();
    let mut direct = game.a(0.0);
    for (i, pi) in p.iter().enumerate() {
        let b = game.b(i, 0.0, &theta);
        let r = game.r(i, i, 0.0).try_inverse().unwrap();
        direct -= &b * r * b.transpose() * pi;
    }
    assert!((f - direct).amax() <= 1e-12);
    assert_eq!(closed_loop_matrix(&game, &theta, &[DMatrix::zeros(4, 4), DMatrix::zeros(4, 4)], 0.0).unwrap(), game.a(0.0));
}

#[test]
fn parameter_boxes_validate_and_project() {
    assert!(ParamBox::new(1.0, 0.0).is_err());
    let bx = ParamBox::new(0.0, std::f64::consts::FRAC_PI_2).unwrap();
    assert_eq!(project(0.7, &bx), 0.7);
    assert_eq!(project(-0.1, &bx), 0.0);
    assert_eq!(project(2.0, &bx), std::f64::consts::FRAC_PI_2);
}
