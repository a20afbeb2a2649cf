//! Fixed-step RK4 integration of stacked matrix ODEs and Simpson quadrature.
//!
//! Every integrator and the quadrature rule evaluate their callbacks at
//! interval endpoints nudged a relative `1e-9` of a step into the interval, so
//! coefficients with a jump at a grid node are always sampled from the side of
//! the interval being integrated.
//!
//! Integrated paths carry the RK4 slopes at both ends of each step, so later
//! passes that read them at stage times get fourth-order accurate values.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::grid::{MatrixPath, TimeGrid};

/// A stack of matrix blocks advanced together by one integrator.
pub type Stack = Vec<DMatrix<f64>>;

pub const DEFAULT_BLOWUP_THRESHOLD: f64 = 1e8;

const ENDPOINT_NUDGE: f64 = 1e-9;

fn inside(from: f64, to: f64) -> f64 {
    from + ENDPOINT_NUDGE * (to - from)
}

/// The three distinct times at which RK4 evaluates a right-hand side on
/// step `k` of the grid, in either direction.
pub(crate) fn stage_times(grid: &TimeGrid, k: usize) -> [f64; 3] {
    let (a, b) = (grid.node(k), grid.node(k + 1));
    [inside(a, b), 0.5 * (a + b), inside(b, a)]
}

fn axpy(base: &Stack, h: f64, slope: &Stack) -> Stack {
    base.iter().zip(slope).map(|(b, s)| b + s * h).collect()
}

fn check(stack: &Stack, time: f64, threshold: f64) -> Result<()> {
    for (block, m) in stack.iter().enumerate() {
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::NumericalFailure { time });
        }
        let norm = m.norm();
        if norm > threshold {
            return Err(Error::BlowUpDetected { time, block, norm });
        }
    }
    Ok(())
}

fn eval<F>(rhs: &mut F, t: f64, state: &Stack) -> Result<Stack>
where
    F: FnMut(f64, &[DMatrix<f64>]) -> Result<Stack>,
{
    let slope = rhs(t, state)?;
    if slope.len() != state.len() {
        return Err(Error::PreconditionViolation(format!(
            "rhs returned {} blocks for a {}-block state",
            slope.len(),
            state.len()
        )));
    }
    for (s, x) in slope.iter().zip(state) {
        if s.shape() != x.shape() {
            return Err(Error::PreconditionViolation("rhs changed a block shape".into()));
        }
        if s.iter().any(|v| !v.is_finite()) {
            return Err(Error::NumericalFailure { time: t });
        }
    }
    Ok(slope)
}

/// One classical RK4 step from `t0` to `t1` (either direction). Returns the
/// new state and the slope `k1` at the start of the step.
fn rk4_step<F, G>(
    rhs: &mut F,
    project: &mut G,
    state: &Stack,
    t0: f64,
    t1: f64,
    threshold: f64,
) -> Result<(Stack, Stack)>
where
    F: FnMut(f64, &[DMatrix<f64>]) -> Result<Stack>,
    G: FnMut(&mut [DMatrix<f64>]),
{
    let h = t1 - t0;
    let tm = 0.5 * (t0 + t1);

    let k1 = eval(rhs, inside(t0, t1), state)?;
    let mut s2 = axpy(state, 0.5 * h, &k1);
    project(&mut s2);
    check(&s2, tm, threshold)?;
    let k2 = eval(rhs, tm, &s2)?;
    let mut s3 = axpy(state, 0.5 * h, &k2);
    project(&mut s3);
    check(&s3, tm, threshold)?;
    let k3 = eval(rhs, tm, &s3)?;
    let mut s4 = axpy(state, h, &k3);
    project(&mut s4);
    check(&s4, t1, threshold)?;
    let k4 = eval(rhs, inside(t1, t0), &s4)?;

    let mut next: Stack = state
        .iter()
        .enumerate()
        .map(|(b, x)| x + (&k1[b] + (&k2[b] + &k3[b]) * 2.0 + &k4[b]) * (h / 6.0))
        .collect();
    project(&mut next);
    check(&next, t1, threshold)?;
    Ok((next, k1))
}

/// Nodal states plus the one-sided slopes at both ends of every interval.
struct Solved {
    by_node: Vec<Stack>,
    start: Vec<Stack>,
    end: Vec<Stack>,
}

fn transpose_stacks(stacks: Vec<Stack>, blocks: usize) -> Vec<Vec<DMatrix<f64>>> {
    let mut columns: Vec<Vec<DMatrix<f64>>> = (0..blocks).map(|_| Vec::with_capacity(stacks.len())).collect();
    for stack in stacks {
        for (b, m) in stack.into_iter().enumerate() {
            columns[b].push(m);
        }
    }
    columns
}

fn into_paths(grid: &TimeGrid, solved: Solved) -> Result<Vec<MatrixPath>> {
    let blocks = solved.by_node[0].len();
    let samples = transpose_stacks(solved.by_node, blocks);
    let start = transpose_stacks(solved.start, blocks);
    let end = transpose_stacks(solved.end, blocks);
    samples
        .into_iter()
        .zip(start)
        .zip(end)
        .map(|((s, a), b)| MatrixPath::with_slopes(*grid, s, a, b))
        .collect()
}

/// Integrates `dM/dt = rhs(t, M)` backward from `M(T) = terminal` to `t = 0`.
pub fn integrate_backward<F>(
    rhs: F,
    terminal: Stack,
    grid: &TimeGrid,
    blowup_threshold: f64,
) -> Result<Vec<MatrixPath>>
where
    F: FnMut(f64, &[DMatrix<f64>]) -> Result<Stack>,
{
    integrate_backward_projected(rhs, terminal, grid, blowup_threshold, |_| {})
}

/// Backward integration with a projection applied to every RK4 stage state
/// (used to keep symmetric blocks symmetric).
pub fn integrate_backward_projected<F, G>(
    mut rhs: F,
    terminal: Stack,
    grid: &TimeGrid,
    blowup_threshold: f64,
    mut project: G,
) -> Result<Vec<MatrixPath>>
where
    F: FnMut(f64, &[DMatrix<f64>]) -> Result<Stack>,
    G: FnMut(&mut [DMatrix<f64>]),
{
    if terminal.is_empty() {
        return Err(Error::PreconditionViolation("empty state stack".into()));
    }
    check(&terminal, grid.horizon(), blowup_threshold)?;
    let n = grid.steps();
    let mut by_node: Vec<Stack> = vec![Vec::new(); n + 1];
    let mut start: Vec<Stack> = vec![Vec::new(); n];
    let mut end: Vec<Stack> = vec![Vec::new(); n];
    by_node[n] = terminal;
    for k in (0..n).rev() {
        let (t1, t0) = (grid.node(k + 1), grid.node(k));
        let (next, k1) = rk4_step(&mut rhs, &mut project, &by_node[k + 1], t1, t0, blowup_threshold)?;
        end[k] = k1;
        start[k] = eval(&mut rhs, inside(t0, t1), &next)?;
        by_node[k] = next;
    }
    into_paths(grid, Solved { by_node, start, end })
}

/// Integrates `dM/dt = rhs(t, M)` forward from `M(0) = initial` to `t = T`.
pub fn integrate_forward<F>(
    mut rhs: F,
    initial: Stack,
    grid: &TimeGrid,
    blowup_threshold: f64,
) -> Result<Vec<MatrixPath>>
where
    F: FnMut(f64, &[DMatrix<f64>]) -> Result<Stack>,
{
    if initial.is_empty() {
        return Err(Error::PreconditionViolation("empty state stack".into()));
    }
    check(&initial, 0.0, blowup_threshold)?;
    let n = grid.steps();
    let mut by_node: Vec<Stack> = Vec::with_capacity(n + 1);
    let mut start: Vec<Stack> = Vec::with_capacity(n);
    let mut end: Vec<Stack> = Vec::with_capacity(n);
    by_node.push(initial);
    for k in 0..n {
        let (t0, t1) = (grid.node(k), grid.node(k + 1));
        let (next, k1) = rk4_step(&mut rhs, &mut |_: &mut [DMatrix<f64>]| {}, &by_node[k], t0, t1, blowup_threshold)?;
        start.push(k1);
        end.push(eval(&mut rhs, inside(t1, t0), &next)?);
        by_node.push(next);
    }
    into_paths(grid, Solved { by_node, start, end })
}

/// Composite Simpson's rule over the grid.
pub fn quadrature<F>(mut integrand: F, grid: &TimeGrid) -> Result<f64>
where
    F: FnMut(f64) -> f64,
{
    let dt = grid.dt();
    let mut total = 0.0;
    for panel in 0..grid.steps() / 2 {
        let a = grid.node(2 * panel);
        let m = grid.node(2 * panel + 1);
        let b = grid.node(2 * panel + 2);
        let fa = integrand(inside(a, b));
        let fm = integrand(m);
        let fb = integrand(inside(b, a));
        if !(fa.is_finite() && fm.is_finite() && fb.is_finite()) {
            return Err(Error::NumericalFailure { time: a });
        }
        total += fa + 4.0 * fm + fb;
    }
    Ok(total * dt / 3.0)
}

/// Symmetrizes every block in place.
pub fn symmetrize_all(blocks: &mut [DMatrix<f64>]) {
    for m in blocks.iter_mut() {
        symmetrize(m);
    }
}

pub fn symmetrize(m: &mut DMatrix<f64>) {
    if !m.is_square() {
        return;
    }
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let avg = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = avg;
            m[(j, i)] = avg;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(v: f64) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, v)
    }

    fn scalar_riccati_p0(steps: usize) -> f64 {
        // Ṗ = P² s − q with q = s = 1, P(1) = 0
        let grid = TimeGrid::new(1.0, steps).unwrap();
        let paths = integrate_backward(
            |_, x| Ok(vec![scalar(x[0][(0, 0)].powi(2) - 1.0)]),
            vec![scalar(0.0)],
            &grid,
            DEFAULT_BLOWUP_THRESHOLD,
        )
        .unwrap();
        paths[0].first()[(0, 0)]
    }

    #[test]
    fn zero_dynamics_keep_terminal_value() {
        let grid = TimeGrid::new(2.0, 10).unwrap();
        let terminal = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let paths = integrate_backward(
            |_, x| Ok(vec![DMatrix::zeros(x[0].nrows(), x[0].ncols())]),
            vec![terminal.clone()],
            &grid,
            DEFAULT_BLOWUP_THRESHOLD,
        )
        .unwrap();
        assert!(paths[0].samples().iter().all(|m| *m == terminal));
    }

    #[test]
    fn scalar_riccati_matches_tanh() {
        let p0 = scalar_riccati_p0(1000);
        assert!((p0 - 1f64.tanh()).abs() <= 1e-8, "{p0}");
    }

    #[test]
    fn rk4_convergence_order_on_scalar_riccati() {
        let err: Vec<f64> = [250, 500, 1000]
            .iter()
            .map(|&s| (scalar_riccati_p0(s) - 1f64.tanh()).abs())
            .collect();
        let o1 = (err[0] / err[1]).log2();
        let o2 = (err[1] / err[2]).log2();
        assert!(o1 >= 3.5 && o2 >= 3.5, "orders {o1} {o2}");
    }

    #[test]
    fn forward_exponential() {
        let grid = TimeGrid::new(1.0, 1000).unwrap();
        let paths = integrate_forward(
            |_, x| Ok(vec![x[0].clone()]),
            vec![scalar(1.0)],
            &grid,
            DEFAULT_BLOWUP_THRESHOLD,
        )
        .unwrap();
        assert!((paths[0].last()[(0, 0)] - std::f64::consts::E).abs() < 1e-9);
        assert_eq!(paths[0].first()[(0, 0)], 1.0);
    }

    #[test]
    fn blow_up_reports_divergence_time() {
        // Ṗ = P² − 1 backward with P(T) = 2 reaches infinity near t = T − ln(3)/2.
        let grid = TimeGrid::new(5.0, 1000).unwrap();
        let err = integrate_backward(
            |_, x| Ok(vec![scalar(-(x[0][(0, 0)].powi(2)) + 1.0)]),
            vec![scalar(2.0)],
            &grid,
            DEFAULT_BLOWUP_THRESHOLD,
        )
        .unwrap_err();
        match err {
            Error::BlowUpDetected { time, block, .. } => {
                assert_eq!(block, 0);
                let expected = 5.0 - 0.5 * 3f64.ln();
                assert!((time - expected).abs() < 0.02, "{time} vs {expected}");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn nan_in_rhs_is_numerical_failure() {
        let grid = TimeGrid::new(1.0, 10).unwrap();
        let err = integrate_forward(|_, _| Ok(vec![scalar(f64::NAN)]), vec![scalar(0.0)], &grid, 1e8)
            .unwrap_err();
        assert!(matches!(err, Error::NumericalFailure { .. }));
    }

    #[test]
    fn simpson_is_exact_for_low_degree_polynomials() {
        // endpoint nudging costs O(1e-9 · dt²) against exactness
        let grid = TimeGrid::new(1.0, 10).unwrap();
        assert!((quadrature(|_| 1.0, &grid).unwrap() - 1.0).abs() < 1e-12);
        assert!((quadrature(|t| t * t, &grid).unwrap() - 1.0 / 3.0).abs() < 1e-10);
        assert!((quadrature(|t| t.powi(3), &grid).unwrap() - 0.25).abs() < 1e-10);
        let long = TimeGrid::new(7.5, 30).unwrap();
        assert!((quadrature(|_| 1.0, &long).unwrap() - 7.5).abs() < 1e-12);
        assert!(quadrature(|_| f64::NAN, &grid).is_err());
    }

    #[test]
    fn quadrature_integrates_step_function_exactly_when_jump_is_on_a_node() {
        let grid = TimeGrid::new(6.0, 1000).unwrap();
        let step = |t: f64| if t <= 3.0 { 100.0 } else { 0.0 };
        assert!((quadrature(step, &grid).unwrap() - 300.0).abs() < 1e-8);
    }

    #[test]
    fn integration_is_deterministic() {
        let grid = TimeGrid::new(1.0, 100).unwrap();
        let run = || {
            integrate_backward(
                |t, x| Ok(vec![&x[0] * &x[0] * t.cos() - DMatrix::identity(2, 2)]),
                vec![DMatrix::from_row_slice(2, 2, &[0.1, 0.2, 0.2, 0.3])],
                &grid,
                1e8,
            )
            .unwrap()
        };
        assert_eq!(run(), run());
    }
}
