mod common;

use common::*;
use confgames_core::scenarios::{general_sum_state_weight, heading_matrix, proximity_regularizer, pursuit_terminal_weight};
use confgames_core::*;
use nalgebra::{DMatrix, DVector};

fn grid(game: &ConfigGame, steps: usize) -> TimeGrid {
    TimeGrid::new(game.horizon(), steps).unwrap()
}

#[test]
fn pursuit_game_has_the_documented_shape() {
    let game = build_pursuit_evasion(&PursuitEvasionSpec::default()).unwrap();
    assert_eq!(game.state_dim(), 8);
    assert_eq!(game.control_dims(), &[2, 2]);
    assert!(game.is_zero_sum() && !game.is_affine());
    // P2's block sits on its own velocity rows
    let b2 = game.b(1, 0.0, &[0.0, 0.0]);
    assert_eq!(b2[(6, 0)], 2.0);
    assert_eq!(b2[(7, 1)], 1.0);
    assert_eq!(b2.rows(0, 6).amax(), 0.0);
}

#[test]
fn terminal_weight_is_scaled_squared_distance() {
    let qf = pursuit_terminal_weight(0.0005);
    let x = DVector::from_vec(vec![1.0, 2.0, 9.0, -9.0, -3.0, 5.0, 7.0, 7.0]);
    let expected = 0.0005 * ((1.0f64 + 3.0).powi(2) + (2.0f64 - 5.0).powi(2));
    assert!((x.dot(&(qf * &x)) - expected).abs() <= 1e-15);
}

fn swap_blocks(x0: &[f64]) -> Vec<f64> {
    let mut out = x0[4..].to_vec();
    out.extend_from_slice(&x0[..4]);
    out
}

fn heading_input(row: usize, player: usize) -> MatrixFn {
    let place = move |block: DMatrix<f64>| {
        let mut b = DMatrix::zeros(8, 2);
        b.view_mut((row, 0), (2, 2)).copy_from(&block);
        b
    };
    MatrixFn::parametrized(
        8,
        2,
        Dependence::Player(player),
        move |_, th| place(heading_matrix(th[player])),
        move |_, th, _| place(DMatrix::from_diagonal(&DVector::from_vec(vec![-th[player].sin(), th[player].cos()]))),
    )
}

/// The same encounter with player 1 evading: it minimizes the negated
/// terminal distance.
fn evader_first(spec: &PursuitEvasionSpec, x0: Vec<f64>) -> ConfigGame {
    let bx = spec.theta_box;
    ConfigGame::zero_sum(ZeroSumSpec {
        horizon: spec.horizon,
        a: MatrixFn::constant(build_pursuit_evasion(spec).unwrap().a(0.0)),
        b1: heading_input(2, 0),
        b2: heading_input(6, 1),
        q: MatrixFn::zeros(8, 8),
        qf: -pursuit_terminal_weight(spec.kappa3),
        theta_box: [bx, bx],
        x0: DVector::from_vec(x0),
    })
    .unwrap()
}

#[test]
fn pursuit_landscape_negates_under_role_exchange() {
    let spec = PursuitEvasionSpec {
        x0: vec![0.0, 0.0, 1.0, -2.0, 750.0, 700.0, 0.0, 3.0],
        ..PursuitEvasionSpec::default()
    };
    let game = build_pursuit_evasion(&spec).unwrap();
    let exchanged = evader_first(&spec, swap_blocks(&spec.x0));
    let g = grid(&game, 1000);
    let bx = game.theta_box()[0];
    let axis: Vec<f64> = (0..5).map(|j| bx.min + bx.width() * j as f64 / 4.0).collect();
    for &a in &axis {
        for &b in &axis {
            let j = solve_stage_two(&game, &[a, b], &g).unwrap().values[0];
            let js = solve_stage_two(&exchanged, &[b, a], &g).unwrap().values[0];
            assert!((j + js).abs() <= 1e-8 * (1.0 + j.abs()), "({a}, {b}): {j} vs {js}");
        }
    }
}

#[test]
fn pursuit_value_is_flat_along_the_diagonal() {
    let game = build_pursuit_evasion(&PursuitEvasionSpec::default()).unwrap();
    let g = grid(&game, 1000);
    let values: Vec<f64> = (0..5)
        .map(|j| {
            let th = std::f64::consts::FRAC_PI_2 * j as f64 / 4.0;
            solve_stage_two(&game, &[th, th], &g).unwrap().values[0]
        })
        .collect();
    let spread = values.iter().cloned().fold(f64::MIN, f64::max) - values.iter().cloned().fold(f64::MAX, f64::min);
    assert!(spread <= 1e-9 * values[0].abs().max(1.0), "{values:?}");
}

#[test]
fn general_sum_weight_expands_to_separation_and_speed_terms() {
    let spec = GeneralSumSpec::default();
    let (q_h, q_v) = (spec.q_h(1.0), spec.q_v);
    let q = general_sum_state_weight(q_h, q_v);
    let x = DVector::from_vec(vec![0.4, 1.3, -0.9, 0.2]);
    let shifted = &x - spec.offset();
    let quad = shifted.dot(&(q * &shifted));
    let expected = -q_h * (x[0] - x[2]).powi(2) + q_v * ((x[1] - spec.v_o[0]).powi(2) + (x[3] - spec.v_o[1]).powi(2));
    assert!((quad - expected).abs() <= 1e-12);
    assert_eq!(spec.q_h(2.999), 100.0);
    assert_eq!(spec.q_h(3.0), 100.0);
    assert_eq!(spec.q_h(3.001), 0.0);
}

#[test]
fn proximity_regularizer_gradient_is_exact() {
    let r = proximity_regularizer(0.02);
    assert_eq!(r.gradient(0, &[0.7, 0.7]), vec![0.0, 0.0]);
    let th = [0.9, 0.6];
    let h = 1e-6;
    for k in 0..2 {
        let mut p = th;
        p[k] += h;
        let mut m = th;
        m[k] -= h;
        let fd = (r.value(0, &p) - r.value(0, &m)) / (2.0 * h);
        assert!((r.gradient(0, &th)[k] - fd).abs() <= 1e-9);
    }
}

#[test]
fn general_sum_game_has_the_documented_shape() {
    let spec = GeneralSumSpec::default();
    let game = build_general_sum(&spec).unwrap();
    assert_eq!(game.state_dim(), 4);
    assert_eq!(game.control_dims(), &[1, 1]);
    assert!(!game.is_zero_sum() && game.is_affine());
    assert_eq!(game.c(0.0).as_slice(), &[spec.v_o[0], 0.0, spec.v_o[1], 0.0]);
    assert_eq!(game.x0().as_slice(), &[0.0, -spec.v_o[0], 0.0, -spec.v_o[1]]);
}

#[test]
fn general_sum_values_swap_with_player_indices() {
    let game = build_general_sum(&GeneralSumSpec::default()).unwrap();
    let g = grid(&game, 1000);
    let bx = game.theta_box()[0];
    let axis: Vec<f64> = (0..5).map(|j| bx.min + bx.width() * j as f64 / 4.0).collect();
    for &a in &axis {
        for &b in &axis {
            let v = solve_stage_two(&game, &[a, b], &g).unwrap().values;
            let vs = solve_stage_two(&game, &[b, a], &g).unwrap().values;
            assert!((v[0] - vs[1]).abs() <= 1e-8, "({a}, {b}): {v:?} vs {vs:?}");
        }
    }
}

#[test]
fn separation_switch_is_resolved_under_step_doubling() {
    // long enough for the switch at t = 3 to fall inside; small authority keeps the flow bounded
    let spec = GeneralSumSpec {
        horizon: 6.0,
        theta_box: [ParamBox::new(0.01, 0.03).unwrap(); 2],
        ..GeneralSumSpec::default()
    };
    let game = build_general_sum(&spec).unwrap();
    let coarse = grid(&game, 1000);
    assert_eq!(coarse.node(500), 3.0);
    let fine = grid(&game, 2000);
    for theta in [[0.012, 0.028], [0.02, 0.02], [0.03, 0.01]] {
        let a = solve_stage_two(&game, &theta, &coarse).unwrap().values;
        let b = solve_stage_two(&game, &theta, &fine).unwrap().values;
        for i in 0..2 {
            assert!(rel_err(a[i], b[i]) <= 1e-5, "{a:?} vs {b:?}");
        }
    }
    let default = build_general_sum(&GeneralSumSpec::default()).unwrap();
    let a = solve_stage_two(&default, &[0.6, 1.2], &grid(&default, 1000)).unwrap().values;
    let b = solve_stage_two(&default, &[0.6, 1.2], &grid(&default, 2000)).unwrap().values;
    for i in 0..2 {
        assert!(rel_err(a[i], b[i]) <= 1e-5);
    }
}

#[test]
fn random_games_are_reproducible_from_their_seed() {
    let spec = RandomGameSpec::new(9, 3, 5, 2);
    let first = random_aq_game(&spec).unwrap();
    let second = random_aq_game(&spec).unwrap();
    let theta = [0.6, 1.0, 1.4];
    for t in [0.0, 0.37, 1.0] {
        assert_eq!(first.a(t), second.a(t));
        assert_eq!(first.c(t), second.c(t));
        for i in 0..3 {
            assert_eq!(first.b(i, t, &theta), second.b(i, t, &theta));
            assert_eq!(first.q(i, t, &theta), second.q(i, t, &theta));
            assert_eq!(first.qf(i), second.qf(i));
        }
    }
    assert_eq!(first.x0(), second.x0());
    let other = random_aq_game(&RandomGameSpec::new(10, 3, 5, 2)).unwrap();
    assert_ne!(first.a(0.0), other.a(0.0));
}

#[test]
fn random_generator_rejects_out_of_range_sizes() {
    assert!(random_aq_game(&RandomGameSpec::new(0, 4, 2, 1)).is_err());
    assert!(random_aq_game(&RandomGameSpec::new(0, 2, 7, 1)).is_err());
    assert!(random_aq_game(&RandomGameSpec::new(0, 2, 2, 3)).is_err());
}

#[test]
fn invalid_scenario_parameters_are_rejected() {
    let bad = PursuitEvasionSpec {
        kappa3: -1.0,
        ..PursuitEvasionSpec::default()
    };
    assert!(matches!(build_pursuit_evasion(&bad), Err(Error::InvalidGame(_))));
    let short = GeneralSumSpec {
        x0: vec![0.0; 3],
        ..GeneralSumSpec::default()
    };
    assert!(matches!(build_general_sum(&short), Err(Error::InvalidGame(_))));
}
