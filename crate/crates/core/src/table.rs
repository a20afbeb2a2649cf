//! Per-parameter tables of coefficients at the RK4 stage times of a grid.
//!
//! Every backward and forward pass over one grid evaluates its coefficients
//! at the same three times per step (both nudged endpoints and the midpoint),
//! so they are computed once per `θ` and shared across passes. Lookups are by
//! exact time; any other time falls back to direct evaluation.

use std::borrow::Cow;
use std::fmt;

use crate::error::Result;
use crate::grid::TimeGrid;
use crate::ode::stage_times;

pub(crate) struct Table<T> {
    grid: TimeGrid,
    /// `entries[3k + s]` holds stage `s` of step `k`.
    entries: Vec<(f64, T)>,
}

impl<T> fmt::Debug for Table<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Table({} entries)", self.entries.len())
    }
}

impl<T: Clone> Table<T> {
    pub(crate) fn build(grid: &TimeGrid, mut f: impl FnMut(f64) -> Result<T>) -> Result<Self> {
        let mut entries = Vec::with_capacity(3 * grid.steps());
        for k in 0..grid.steps() {
            for t in stage_times(grid, k) {
                entries.push((t, f(t)?));
            }
        }
        Ok(Self { grid: *grid, entries })
    }

    pub(crate) fn get(&self, t: f64) -> Option<&T> {
        let k = (t / self.grid.dt()).floor();
        if !k.is_finite() {
            return None;
        }
        let k = k as isize;
        for step in (k - 1)..=(k + 1) {
            if step < 0 || step as usize >= self.grid.steps() {
                continue;
            }
            for (time, value) in &self.entries[3 * step as usize..3 * step as usize + 3] {
                if *time == t {
                    return Some(value);
                }
            }
        }
        None
    }

    pub(crate) fn lookup<'a>(&'a self, t: f64, fallback: impl FnOnce(f64) -> Result<T>) -> Result<Cow<'a, T>> {
        match self.get(t) {
            Some(v) => Ok(Cow::Borrowed(v)),
            None => fallback(t).map(Cow::Owned),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stage_times_hit_and_other_times_fall_back() {
        let grid = TimeGrid::new(6.0, 10).unwrap();
        let table = Table::build(&grid, |t| Ok(t * 2.0)).unwrap();
        for k in 0..10 {
            for t in stage_times(&grid, k) {
                assert_eq!(table.get(t), Some(&(2.0 * t)));
            }
        }
        assert_eq!(table.get(grid.node(3)), None);
        let v = table.lookup(0.123, |t| Ok(t + 1.0)).unwrap();
        assert_eq!(*v, 1.123);
    }
}
