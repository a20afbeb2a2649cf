//! Uniform time grids and grid-sampled matrix trajectories.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};

/// Default number of integration steps.
pub const DEFAULT_STEPS: usize = 1000;

/// Uniform discretization of `[0, T]` with an even number of steps.
///
/// The step count must be even so that composite Simpson quadrature can run on
/// the same grid as the integrators.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TimeGrid {
    horizon: f64,
    steps: usize,
}

impl TimeGrid {
    pub fn new(horizon: f64, steps: usize) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::InvalidGrid(format!("horizon must be positive, got {horizon}")));
        }
        if steps == 0 || !steps.is_multiple_of(2) {
            return Err(Error::InvalidGrid(format!(
                "step count must be positive and even, got {steps}"
            )));
        }
        Ok(Self { horizon, steps })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    pub fn len(&self) -> usize {
        self.steps + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Time of node `k`; the last node is exactly the horizon.
    pub fn node(&self, k: usize) -> f64 {
        if k >= self.steps {
            self.horizon
        } else {
            self.horizon * k as f64 / self.steps as f64
        }
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..=self.steps).map(move |k| self.node(k))
    }

    /// Grid with twice as many steps over the same horizon.
    pub fn refined(&self, factor: usize) -> Self {
        Self {
            horizon: self.horizon,
            steps: self.steps * factor,
        }
    }

    /// Locates `t` on the grid: returns the bracketing interval index and the
    /// fractional position inside it. Times within 1e-9 of a node snap to it.
    pub(crate) fn locate(&self, t: f64) -> (usize, f64) {
        let u = (t / self.horizon * self.steps as f64).clamp(0.0, self.steps as f64);
        let nearest = u.round();
        if (u - nearest).abs() < 1e-9 {
            return (nearest as usize, 0.0);
        }
        let k = (u.floor() as usize).min(self.steps - 1);
        (k, u - k as f64)
    }
}

/// A matrix-valued trajectory stored at every node of a [`TimeGrid`].
///
/// Off-node queries interpolate linearly between the bracketing samples, or
/// by cubic Hermite interpolation when the path carries slopes. Slopes are
/// stored per interval end so a path with a kink at a node interpolates each
/// side from its own one-sided derivative.
#[derive(Clone, Debug, PartialEq)]
pub struct MatrixPath {
    grid: TimeGrid,
    samples: Vec<DMatrix<f64>>,
    slopes: Option<Slopes>,
}

#[derive(Clone, Debug, PartialEq)]
struct Slopes {
    /// `start[k]`: derivative at node `k` seen from interval `k`.
    start: Vec<DMatrix<f64>>,
    /// `end[k]`: derivative at node `k + 1` seen from interval `k`.
    end: Vec<DMatrix<f64>>,
}

impl MatrixPath {
    pub fn new(grid: TimeGrid, samples: Vec<DMatrix<f64>>) -> Result<Self> {
        if samples.len() != grid.len() {
            return Err(Error::InvalidGrid(format!(
                "expected {} samples, got {}",
                grid.len(),
                samples.len()
            )));
        }
        let shape = samples[0].shape();
        if samples.iter().any(|m| m.shape() != shape) {
            return Err(Error::InvalidGrid("samples do not share a shape".into()));
        }
        Ok(Self {
            grid,
            samples,
            slopes: None,
        })
    }

    /// Path with one-sided slopes for Hermite interpolation; `start[k]` and
    /// `end[k]` are the derivatives at the two ends of interval `k`.
    pub fn with_slopes(
        grid: TimeGrid,
        samples: Vec<DMatrix<f64>>,
        start: Vec<DMatrix<f64>>,
        end: Vec<DMatrix<f64>>,
    ) -> Result<Self> {
        let mut path = Self::new(grid, samples)?;
        let shape = path.shape();
        if start.len() != grid.steps() || end.len() != grid.steps() {
            return Err(Error::InvalidGrid("need one slope pair per interval".into()));
        }
        if start.iter().chain(&end).any(|m| m.shape() != shape) {
            return Err(Error::InvalidGrid("slopes do not match the sample shape".into()));
        }
        path.slopes = Some(Slopes { start, end });
        Ok(path)
    }

    pub fn has_slopes(&self) -> bool {
        self.slopes.is_some()
    }

    /// Path that is identically `value`.
    pub fn constant(grid: TimeGrid, value: DMatrix<f64>) -> Self {
        Self {
            grid,
            samples: vec![value; grid.len()],
            slopes: None,
        }
    }

    pub fn zeros(grid: TimeGrid, rows: usize, cols: usize) -> Self {
        Self::constant(grid, DMatrix::zeros(rows, cols))
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn shape(&self) -> (usize, usize) {
        self.samples[0].shape()
    }

    pub fn samples(&self) -> &[DMatrix<f64>] {
        &self.samples
    }

    pub fn sample(&self, k: usize) -> &DMatrix<f64> {
        &self.samples[k]
    }

    pub fn first(&self) -> &DMatrix<f64> {
        &self.samples[0]
    }

    pub fn last(&self) -> &DMatrix<f64> {
        &self.samples[self.samples.len() - 1]
    }

    /// Value at time `t`, clamped to `[0, T]`.
    pub fn at(&self, t: f64) -> DMatrix<f64> {
        let (k, w) = self.grid.locate(t);
        if w == 0.0 {
            return self.samples[k].clone();
        }
        match &self.slopes {
            None => &self.samples[k] * (1.0 - w) + &self.samples[k + 1] * w,
            Some(sl) => {
                let h = self.grid.dt();
                let (w2, w3) = (w * w, w * w * w);
                &self.samples[k] * (2.0 * w3 - 3.0 * w2 + 1.0)
                    + &sl.start[k] * (h * (w3 - 2.0 * w2 + w))
                    + &self.samples[k + 1] * (3.0 * w2 - 2.0 * w3)
                    + &sl.end[k] * (h * (w3 - w2))
            }
        }
    }

    /// Scalar value at `t` for 1×1 paths.
    pub fn scalar_at(&self, t: f64) -> f64 {
        self.at(t)[(0, 0)]
    }

    /// Largest entrywise difference to another path on the same grid.
    pub fn max_abs_diff(&self, other: &MatrixPath) -> f64 {
        self.samples
            .iter()
            .zip(&other.samples)
            .map(|(a, b)| (a - b).amax())
            .fold(0.0, f64::max)
    }

    /// Largest entry magnitude over all samples.
    pub fn max_abs(&self) -> f64 {
        self.samples.iter().map(|m| m.amax()).fold(0.0, f64::max)
    }

    /// `factor · self`, slopes included.
    pub fn scaled(&self, factor: f64) -> MatrixPath {
        let scale = |v: &Vec<DMatrix<f64>>| v.iter().map(|m| m * factor).collect();
        MatrixPath {
            grid: self.grid,
            samples: scale(&self.samples),
            slopes: self.slopes.as_ref().map(|sl| Slopes {
                start: scale(&sl.start),
                end: scale(&sl.end),
            }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_rejects_odd_steps_and_bad_horizon() {
        assert!(TimeGrid::new(1.0, 3).is_err());
        assert!(TimeGrid::new(1.0, 0).is_err());
        assert!(TimeGrid::new(0.0, 10).is_err());
        assert!(TimeGrid::new(f64::NAN, 10).is_err());
    }

    #[test]
    fn nodes_are_uniform_and_end_exactly_at_horizon() {
        let g = TimeGrid::new(6.0, 1000).unwrap();
        let nodes: Vec<f64> = g.nodes().collect();
        assert_eq!(nodes.len(), 1001);
        assert_eq!(nodes[0], 0.0);
        assert_eq!(nodes[1000], 6.0);
        assert_eq!(nodes[500], 3.0);
        assert!(nodes.windows(2).all(|w| w[1] > w[0]));
        for w in nodes.windows(2) {
            assert!(((w[1] - w[0]) - g.dt()).abs() < 1e-12);
        }
    }

    #[test]
    fn path_returns_samples_at_nodes_and_interpolates_between() {
        let g = TimeGrid::new(1.0, 4).unwrap();
        let samples: Vec<_> = g.nodes().map(|t| DMatrix::from_element(1, 1, t * t)).collect();
        let p = MatrixPath::new(g, samples.clone()).unwrap();
        for (k, t) in g.nodes().enumerate() {
            assert_eq!(p.at(t), samples[k]);
        }
        // halfway between 0.25 and 0.5
        let mid = p.scalar_at(0.375);
        assert!((mid - 0.5 * (0.0625 + 0.25)).abs() < 1e-15);
        assert_eq!(p.scalar_at(2.0), 1.0);
    }

    #[test]
    fn hermite_path_is_exact_for_cubics() {
        let g = TimeGrid::new(2.0, 8).unwrap();
        let f = |t: f64| DMatrix::from_element(1, 1, t * t * t - t);
        let df = |t: f64| DMatrix::from_element(1, 1, 3.0 * t * t - 1.0);
        let samples = g.nodes().map(f).collect();
        let start = (0..8).map(|k| df(g.node(k))).collect();
        let end = (0..8).map(|k| df(g.node(k + 1))).collect();
        let p = MatrixPath::with_slopes(g, samples, start, end).unwrap();
        for t in [0.1, 0.33, 1.2345, 1.99] {
            assert!((p.scalar_at(t) - f(t)[(0, 0)]).abs() < 1e-13);
        }
        assert_eq!(p.scaled(-1.0).scalar_at(0.33), -p.scalar_at(0.33));
    }

    #[test]
    fn path_rejects_mismatched_samples() {
        let g = TimeGrid::new(1.0, 2).unwrap();
        assert!(MatrixPath::new(g, vec![DMatrix::zeros(1, 1); 2]).is_err());
        let mixed = vec![DMatrix::zeros(1, 1), DMatrix::zeros(2, 1), DMatrix::zeros(1, 1)];
        assert!(MatrixPath::new(g, mixed).is_err());
    }
}
