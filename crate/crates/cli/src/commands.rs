//! The four subcommands. Each computes first, then writes its files.

use std::path::Path;

use confgames_core::solver::{classify, landscape, lattice_2d, InnerRecord};
use confgames_core::{
    finite_difference_gradient, ibr_solve, naive_baseline, value_and_gradient, Certificate, ConfigGame, Error,
    IbrTrace, TimeGrid,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::RunConfig;
use crate::output::{ensure_dir, indexed, num, write_summary, Csv, GameInfo};
use crate::{exit, CliError};

/// Exit code plus the structured result written to `summary.json`.
#[derive(Debug)]
pub struct Outcome<T> {
    pub exit_code: i32,
    pub result: T,
}

fn prepare(config: &RunConfig) -> Result<(ConfigGame, TimeGrid), CliError> {
    let game = config.build_game()?;
    config.check(&game)?;
    let grid = config.settings().grid(game.horizon())?;
    Ok((game, grid))
}

fn certificates(game: &ConfigGame, theta: &[f64], gradients: &[Vec<f64>], tol: f64) -> Vec<Certificate> {
    gradients
        .iter()
        .enumerate()
        .map(|(i, row)| Certificate {
            verdict: classify(theta[i], row[i], &game.theta_box()[i], tol),
            grad_own: row[i],
        })
        .collect()
}

fn record_row(r: &InnerRecord) -> Vec<String> {
    let mut row = vec![r.sweep.to_string(), (r.player + 1).to_string(), r.iter.to_string()];
    row.extend(r.theta.iter().map(|x| num(*x)));
    row.extend(r.values.iter().map(|x| num(*x)));
    row.push(num(r.grad_own));
    row.push(num(r.step_size));
    row
}

fn trace_csv(players: usize, theta0: &[f64], values0: Option<&[f64]>, records: &[InnerRecord]) -> Csv {
    let mut cols: Vec<String> = ["sweep", "player", "inner_iter"].map(String::from).to_vec();
    cols.extend(indexed("theta", players));
    cols.extend(indexed("J", players));
    cols.push("grad_own".into());
    cols.push("step_size".into());
    let mut csv = Csv::new(&cols);
    // the starting point, before any player moves
    let mut row = vec!["0".to_string(), "0".to_string(), "0".to_string()];
    row.extend(theta0.iter().map(|x| num(*x)));
    match values0 {
        Some(v) => row.extend(v.iter().map(|x| num(*x))),
        None => row.extend(std::iter::repeat_n(String::new(), players)),
    }
    row.extend([String::new(), String::new()]);
    csv.row(&row);
    for r in records {
        csv.row(&record_row(r));
    }
    csv
}

#[derive(Debug, Serialize)]
pub struct SolveResult {
    pub converged: bool,
    pub theta: Vec<f64>,
    pub values: Vec<f64>,
    pub gradients: Vec<Vec<f64>>,
    pub certificates: Vec<Certificate>,
    pub sweeps: Vec<Vec<f64>>,
    pub last_step: f64,
    pub inner_iterations: usize,
    pub warnings: Vec<String>,
    pub error: Option<String>,
}

/// Iterated best response from `theta0`; writes `trace.csv` and `summary.json`.
pub fn solve(config: &RunConfig, dir: &Path) -> Result<Outcome<SolveResult>, CliError> {
    let (game, _) = prepare(config)?;
    let settings = config.settings();
    let players = game.players();
    let (trace, exit_code, error) = match ibr_solve(&game, &config.theta0, &settings) {
        Ok(trace) => {
            let code = if trace.converged { exit::OK } else { exit::NOT_CONVERGED };
            (trace, code, None)
        }
        Err(Error::BestResponseStalled { player, trace }) => (
            *trace,
            exit::INFEASIBLE,
            Some(format!("best response for player {} stalled at infeasible parameters", player + 1)),
        ),
        Err(e @ Error::InfeasibleTheta { .. }) => (IbrTrace::default(), exit::INFEASIBLE, Some(e.to_string())),
        Err(e) => return Err(e.into()),
    };
    let values0 = trace
        .records
        .first()
        .map(|r| r.values.as_slice())
        .or((trace.records.is_empty() && !trace.values.is_empty()).then_some(trace.values.as_slice()));
    let csv = trace_csv(players, &config.theta0, values0, &trace.records);
    let certs = if trace.gradients.is_empty() {
        Vec::new()
    } else {
        certificates(&game, &trace.theta, &trace.gradients, settings.stationarity_tol)
    };
    let result = SolveResult {
        converged: trace.converged,
        theta: trace.theta.clone(),
        values: trace.values.clone(),
        gradients: trace.gradients.clone(),
        certificates: certs,
        sweeps: trace.sweeps.clone(),
        last_step: trace.last_step,
        inner_iterations: trace.records.len(),
        warnings: trace.warnings.clone(),
        error,
    };
    let info = GameInfo::of(&game);
    ensure_dir(dir)?;
    csv.write(&dir.join("trace.csv"), "solve", config, Some(&info))?;
    write_summary(dir, "solve", exit_code, config, Some(&info), &result)?;
    Ok(Outcome { exit_code, result })
}

/// One evaluated lattice point.
#[derive(Clone, Debug, Serialize)]
pub struct SweepPoint {
    pub theta: Vec<f64>,
    pub values: Option<Vec<f64>>,
    pub own_gradients: Option<Vec<f64>>,
}

#[derive(Debug, Serialize)]
pub struct SweepResult {
    pub grid_per_axis: usize,
    pub feasible: usize,
    pub infeasible: usize,
    #[serde(skip)]
    pub points: Vec<SweepPoint>,
}

/// Values and own-gradients on a lattice over the parameter box; writes
/// `landscape.csv` and `summary.json`.
pub fn sweep(config: &RunConfig, dir: &Path) -> Result<Outcome<SweepResult>, CliError> {
    let (game, grid) = prepare(config)?;
    if game.players() != 2 {
        return Err(CliError::usage("sweep needs a two-player scenario"));
    }
    let per_axis = config.sweep.grid_per_axis;
    if per_axis == 0 {
        return Err(CliError::usage("sweep.grid_per_axis must be positive"));
    }
    let thetas = lattice_2d(game.theta_box(), per_axis);
    let cols = ["theta1", "theta2", "J1", "J2", "dJ1_dtheta1", "dJ2_dtheta2", "feasible"].map(String::from);
    let mut csv = Csv::new(&cols);
    let mut points = Vec::with_capacity(thetas.len());
    for p in landscape(&game, &thetas, &grid, game.x0()) {
        let mut row: Vec<String> = p.theta.iter().map(|x| num(*x)).collect();
        match &p.outcome {
            Ok((v, g)) => {
                row.extend([num(v[0]), num(v[1]), num(g[0][0]), num(g[1][1]), "true".into()]);
                points.push(SweepPoint {
                    theta: p.theta.clone(),
                    values: Some(v.clone()),
                    own_gradients: Some(vec![g[0][0], g[1][1]]),
                });
            }
            Err(reason) => {
                log::debug!("lattice point {:?} infeasible: {reason}", p.theta);
                row.extend(std::iter::repeat_n(String::new(), 4));
                row.push("false".into());
                points.push(SweepPoint {
                    theta: p.theta.clone(),
                    values: None,
                    own_gradients: None,
                });
            }
        }
        csv.row(&row);
    }
    let feasible = points.iter().filter(|p| p.values.is_some()).count();
    let result = SweepResult {
        grid_per_axis: per_axis,
        feasible,
        infeasible: points.len() - feasible,
        points,
    };
    let info = GameInfo::of(&game);
    ensure_dir(dir)?;
    csv.write(&dir.join("landscape.csv"), "sweep", config, Some(&info))?;
    write_summary(dir, "sweep", exit::OK, config, Some(&info), &result)?;
    Ok(Outcome {
        exit_code: exit::OK,
        result,
    })
}

/// `|a − b| / max(|a|, |b|)`, with differences below `1e-10` counted as exact.
pub fn relative_error(a: f64, b: f64) -> f64 {
    let diff = (a - b).abs();
    if diff <= 1e-10 {
        0.0
    } else {
        diff / a.abs().max(b.abs())
    }
}

#[derive(Debug, Serialize)]
pub struct GradCheckResult {
    pub samples: Vec<Vec<f64>>,
    pub max_rel_err: f64,
    pub tolerance: f64,
    pub passed: bool,
    pub error: Option<String>,
}

/// Sensitivity gradients against central differences at random interior
/// points; writes `gradcheck.csv` and `summary.json`.
pub fn grad_check(config: &RunConfig, dir: &Path) -> Result<Outcome<GradCheckResult>, CliError> {
    let (game, grid) = prepare(config)?;
    let gc = &config.grad_check;
    if !(gc.step > 0.0 && gc.tolerance > 0.0) {
        return Err(CliError::usage("grad_check.step and grad_check.tolerance must be positive"));
    }
    let players = game.players();
    let mut rng = ChaCha8Rng::seed_from_u64(gc.seed);
    let samples: Vec<Vec<f64>> = (0..gc.samples)
        .map(|_| {
            game.theta_box()
                .iter()
                .map(|b| b.min + b.width() * rng.random_range(0.05..0.95))
                .collect()
        })
        .collect();
    let mut cols = indexed("theta", players);
    cols.extend(["component", "ode_grad", "fd_grad", "rel_err"].map(String::from));
    let mut csv = Csv::new(&cols);
    let mut max_rel_err: f64 = 0.0;
    let mut error = None;
    for theta in &samples {
        let checked = value_and_gradient(&game, theta, game.x0(), &grid)
            .and_then(|(_, ode)| Ok((ode, finite_difference_gradient(&game, theta, game.x0(), &grid, gc.step)?)));
        let (ode, fd) = match checked {
            Ok(pair) => pair,
            Err(e @ Error::InfeasibleTheta { .. }) => {
                error = Some(e.to_string());
                break;
            }
            Err(e) => return Err(e.into()),
        };
        for i in 0..players {
            for k in 0..players {
                let a = ode[i][k] + gc.inject_offset;
                let b = fd[i][k];
                let err = relative_error(a, b);
                max_rel_err = max_rel_err.max(err);
                let mut row: Vec<String> = theta.iter().map(|x| num(*x)).collect();
                row.extend([format!("dJ{}/dtheta{}", i + 1, k + 1), num(a), num(b), num(err)]);
                csv.row(&row);
            }
        }
    }
    let passed = error.is_none() && max_rel_err <= gc.tolerance;
    let exit_code = if error.is_some() {
        exit::INFEASIBLE
    } else if passed {
        exit::OK
    } else {
        exit::GRADIENT_CHECK_FAILED
    };
    let result = GradCheckResult {
        samples,
        max_rel_err,
        tolerance: gc.tolerance,
        passed,
        error,
    };
    let info = GameInfo::of(&game);
    ensure_dir(dir)?;
    csv.write(&dir.join("gradcheck.csv"), "grad-check", config, Some(&info))?;
    write_summary(dir, "grad-check", exit_code, config, Some(&info), &result)?;
    Ok(Outcome { exit_code, result })
}

#[derive(Debug, Serialize)]
pub struct BaselineResult {
    /// 1-based.
    pub naive_player: usize,
    pub naive_theta: f64,
    pub equilibrium_theta: Vec<f64>,
    pub equilibrium_converged: bool,
    pub realized_theta: Vec<f64>,
    /// `J¹` at the realized parameters.
    pub realized_value: f64,
    /// `J¹(θ*)`.
    pub equilibrium_value: f64,
    /// `J¹(realized) − J¹(θ*)`.
    pub value_gap: f64,
    pub naive_regret: f64,
    pub warnings: Vec<String>,
}

/// Naive player against the fixed `theta0`, compared with the equilibrium;
/// writes `baseline.csv` and `summary.json`.
pub fn baseline(config: &RunConfig, dir: &Path) -> Result<Outcome<BaselineResult>, CliError> {
    let (game, _) = prepare(config)?;
    if !game.is_zero_sum() {
        return Err(CliError::usage("baseline needs a zero-sum scenario"));
    }
    let naive_player = config.baseline.naive_player;
    if !(1..=2).contains(&naive_player) {
        return Err(CliError::usage("baseline.naive_player must be 1 or 2"));
    }
    let out = match naive_baseline(&game, &config.theta0, &config.settings(), naive_player - 1) {
        Ok(out) => out,
        Err(e @ (Error::InfeasibleTheta { .. } | Error::BestResponseStalled { .. })) => {
            return Err(CliError::Infeasible(e.to_string()))
        }
        Err(e) => return Err(e.into()),
    };
    let cols = ["path", "sweep", "player", "inner_iter", "theta_1", "theta_2", "J_1"].map(String::from);
    let mut csv = Csv::new(&cols);
    let path_rows = |csv: &mut Csv, name: &str, records: &[InnerRecord]| {
        for r in records {
            csv.row(&[
                name.into(),
                r.sweep.to_string(),
                (r.player + 1).to_string(),
                r.iter.to_string(),
                num(r.theta[0]),
                num(r.theta[1]),
                num(r.values[0]),
            ]);
        }
    };
    path_rows(&mut csv, "naive", &out.naive.records);
    path_rows(&mut csv, "equilibrium", &out.equilibrium.records);
    let point = |name: &str, theta: &[f64], value: f64| {
        [name.into(), String::new(), String::new(), String::new(), num(theta[0]), num(theta[1]), num(value)]
    };
    csv.row(&point("realized", &out.realized_theta, out.realized_value));
    csv.row(&point("saddle", &out.equilibrium.theta, out.equilibrium_value));
    csv.row(&[
        "gap".into(),
        String::new(),
        String::new(),
        String::new(),
        String::new(),
        String::new(),
        num(out.value_gap()),
    ]);
    let exit_code = if out.equilibrium.converged { exit::OK } else { exit::NOT_CONVERGED };
    let mut warnings = out.naive.warnings.clone();
    warnings.extend(out.equilibrium.warnings.iter().cloned());
    let result = BaselineResult {
        naive_player,
        naive_theta: out.naive.theta_i,
        equilibrium_theta: out.equilibrium.theta.clone(),
        equilibrium_converged: out.equilibrium.converged,
        realized_theta: out.realized_theta.clone(),
        realized_value: out.realized_value,
        equilibrium_value: out.equilibrium_value,
        value_gap: out.value_gap(),
        naive_regret: out.naive_regret,
        warnings,
    };
    let info = GameInfo::of(&game);
    ensure_dir(dir)?;
    csv.write(&dir.join("baseline.csv"), "baseline", config, Some(&info))?;
    write_summary(dir, "baseline", exit_code, config, Some(&info), &result)?;
    Ok(Outcome { exit_code, result })
}
