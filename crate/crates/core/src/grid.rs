//! Ordered sample times on `[a, b]`.

use serde::Serialize;

use crate::error::{Error, Result};

/// Strictly increasing sample times `times[0] = a < ... <= b`.
///
/// `end` is the right endpoint `b` of the interval the grid lives on. It may be
/// larger than the last sample time, e.g. for clock-uniform grids that stop at
/// a cap before the singular endpoint.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimeGrid {
    times: Vec<f64>,
    end: f64,
}

impl TimeGrid {
    pub fn uniform(a: f64, b: f64, n_steps: usize) -> Result<Self> {
        if !a.is_finite() || !b.is_finite() {
            return Err(Error::InvalidGrid(format!(
                "non-finite endpoints [{a}, {b}]"
            )));
        }
        if a >= b {
            return Err(Error::InvalidGrid(format!("empty interval [{a}, {b}]")));
        }
        if n_steps == 0 {
            return Err(Error::InvalidGrid("zero steps".into()));
        }
        let h = (b - a) / n_steps as f64;
        let mut times: Vec<f64> = (0..n_steps).map(|k| a + k as f64 * h).collect();
        times.push(b);
        Self::from_times(times, b)
    }

    pub fn from_times(times: Vec<f64>, end: f64) -> Result<Self> {
        if times.len() < 2 {
            return Err(Error::InvalidGrid("need at least two times".into()));
        }
        if !end.is_finite() && end != f64::INFINITY {
            return Err(Error::InvalidGrid(format!("bad right endpoint {end}")));
        }
        for (k, w) in times.windows(2).enumerate() {
            let dt = w[1] - w[0];
            if !w[0].is_finite() || !w[1].is_finite() || !(dt > 0.0) || !dt.is_finite() {
                return Err(Error::InvalidGrid(format!(
                    "step {k} from {} to {} is not positive and finite",
                    w[0], w[1]
                )));
            }
        }
        let last = *times.last().unwrap();
        if last > end {
            return Err(Error::InvalidGrid(format!(
                "last time {last} beyond right endpoint {end}"
            )));
        }
        Ok(Self { times, end })
    }

    /// Sort, deduplicate and validate an arbitrary collection of times.
    pub fn from_points(mut points: Vec<f64>, end: f64) -> Result<Self> {
        if points.iter().any(|t| t.is_nan()) {
            return Err(Error::InvalidGrid("NaN time".into()));
        }
        points.sort_by(|a, b| a.partial_cmp(b).unwrap());
        points.dedup();
        Self::from_times(points, end)
    }

    pub fn start(&self) -> f64 {
        self.times[0]
    }

    pub fn end(&self) -> f64 {
        self.end
    }

    pub fn last(&self) -> f64 {
        *self.times.last().unwrap()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn n_cells(&self) -> usize {
        self.times.len() - 1
    }

    pub fn step(&self, k: usize) -> f64 {
        self.times[k + 1] - self.times[k]
    }

    pub fn steps(&self) -> impl Iterator<Item = f64> + '_ {
        self.times.windows(2).map(|w| w[1] - w[0])
    }

    /// Index of a time that lies exactly on the grid.
    pub fn index_of(&self, t: f64) -> Option<usize> {
        self.times
            .binary_search_by(|s| s.partial_cmp(&t).unwrap())
            .ok()
    }

    /// Index of the last grid time `<= t`.
    pub fn floor_index(&self, t: f64) -> usize {
        match self.times.binary_search_by(|s| s.partial_cmp(&t).unwrap()) {
            Ok(i) => i,
            Err(0) => 0,
            Err(i) => i - 1,
        }
    }
}
