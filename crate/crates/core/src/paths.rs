//! Brownian paths on a [`TimeGrid`] and the discrete stochastic integrals
//! built on them.
//!
//! Every integral here is a left-endpoint sum `Σ_k φ_k ΔW_k`, the exact Itô
//! integral of the adapted step process equal to `φ_k` on `[t_k, t_{k+1})`.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::rng::StreamKey;

/// Finite-dimensional Euclidean stand-in for the state space.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VectorPathValue(pub Vec<f64>);

impl VectorPathValue {
    pub fn zeros(dim: usize) -> Self {
        Self(vec![0.0; dim])
    }

    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.is_empty() {
            return Err(Error::EmptyInput("vector coordinates"));
        }
        if let Some(c) = coords.iter().find(|c| !c.is_finite()) {
            return Err(Error::OutOfDomain {
                what: "vector coordinate",
                value: *c,
            });
        }
        Ok(Self(coords))
    }

    pub fn basis(dim: usize, i: usize) -> Self {
        let mut v = vec![0.0; dim];
        v[i] = 1.0;
        Self(v)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn dot(&self, x: &[f64]) -> f64 {
        self.0.iter().zip(x).map(|(a, b)| a * b).sum()
    }

    pub fn norm(&self) -> f64 {
        norm(&self.0)
    }
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|c| c * c).sum::<f64>().sqrt()
}

/// `E min(‖ξ‖, 1)`, a metric for convergence in probability.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize)]
pub struct L0Metric(f64);

impl L0Metric {
    pub fn value(self) -> f64 {
        self.0
    }
}

pub fn l0_metric(norms: &[f64]) -> Result<L0Metric> {
    if norms.is_empty() {
        return Err(Error::EmptyInput("l0 metric samples"));
    }
    if let Some(x) = norms.iter().find(|x| !(**x >= 0.0)) {
        return Err(Error::OutOfDomain {
            what: "norm sample",
            value: *x,
        });
    }
    let s: f64 = norms.iter().map(|x| x.min(1.0)).sum();
    Ok(L0Metric(s / norms.len() as f64))
}

/// Increments of a Brownian motion over a grid. The value at `times[0]` is 0.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BrownianPath {
    grid: TimeGrid,
    increments: Vec<f64>,
    #[serde(skip)]
    values: Vec<f64>,
    seed: StreamKey,
}

pub fn sample_path(grid: &TimeGrid, key: StreamKey) -> BrownianPath {
    let mut rng = key.rng();
    let increments = grid
        .steps()
        .map(|dt| dt.sqrt() * rng.sample::<f64, _>(StandardNormal))
        .collect();
    BrownianPath::build(grid.clone(), increments, key)
}

impl BrownianPath {
    fn build(grid: TimeGrid, increments: Vec<f64>, seed: StreamKey) -> Self {
        let mut values = Vec::with_capacity(increments.len() + 1);
        let mut w = 0.0;
        values.push(w);
        for dw in &increments {
            w += dw;
            values.push(w);
        }
        Self {
            grid,
            increments,
            values,
            seed,
        }
    }

    /// Wrap externally produced increments (for injected or recovered noise).
    pub fn from_increments(grid: TimeGrid, increments: Vec<f64>, seed: StreamKey) -> Result<Self> {
        if increments.len() != grid.n_cells() {
            return Err(Error::LengthMismatch {
                expected: grid.n_cells(),
                found: increments.len(),
            });
        }
        Ok(Self::build(grid, increments, seed))
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn times(&self) -> &[f64] {
        self.grid.times()
    }

    pub fn increments(&self) -> &[f64] {
        &self.increments
    }

    /// Cumulative values `W(t_k) - W(t_0)`.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn seed(&self) -> StreamKey {
        self.seed
    }

    pub fn n_cells(&self) -> usize {
        self.increments.len()
    }

    /// Value at a time that is on the grid.
    pub fn value_at(&self, t: f64) -> Result<f64> {
        self.grid
            .index_of(t)
            .map(|i| self.values[i])
            .ok_or_else(|| Error::InvalidGrid(format!("time {t} is not a grid point")))
    }

    /// The path `-W` on the same grid.
    pub fn negated(&self) -> Self {
        let incs = self.increments.iter().map(|x| -x).collect();
        Self::build(self.grid.clone(), incs, self.seed)
    }

    /// Halve every cell, drawing midpoints from the Brownian bridge between
    /// the existing values. Values at the old grid times are preserved
    /// exactly up to summation order.
    pub fn refine_dyadic(&self, key: StreamKey) -> Self {
        let mut rng = key.rng();
        let times = self.grid.times();
        let mut new_times = Vec::with_capacity(2 * times.len());
        let mut incs = Vec::with_capacity(2 * self.increments.len());
        for (k, dw) in self.increments.iter().enumerate() {
            let (t0, t1) = (times[k], times[k + 1]);
            let tm = 0.5 * (t0 + t1);
            new_times.push(t0);
            if tm > t0 && tm < t1 {
                let (left, right) = bridge_split(t0, tm, t1, *dw, &mut rng);
                new_times.push(tm);
                incs.push(left);
                incs.push(right);
            } else {
                incs.push(*dw);
            }
        }
        new_times.push(self.grid.last());
        let grid = TimeGrid::from_times(new_times, self.grid.end()).expect("refinement keeps order");
        Self::build(grid, incs, key)
    }

    /// Keep the increments of cells ending at or before `t`, redraw the rest
    /// from `key`. The two paths agree on `[t_0, t]`.
    pub fn resample_after(&self, t: f64, key: StreamKey) -> Self {
        let mut rng = key.rng();
        let times = self.grid.times();
        let incs = self
            .increments
            .iter()
            .enumerate()
            .map(|(k, dw)| {
                if times[k + 1] <= t {
                    *dw
                } else {
                    (times[k + 1] - times[k]).sqrt() * rng.sample::<f64, _>(StandardNormal)
                }
            })
            .collect();
        Self::build(self.grid.clone(), incs, key)
    }

    /// Replace cells `range` with the supplied ones. `times` must start at
    /// `times[range.start]` and end at `times[range.end]`.
    pub(crate) fn splice(
        &self,
        range: std::ops::Range<usize>,
        times: &[f64],
        increments: &[f64],
    ) -> Self {
        let old = self.grid.times();
        debug_assert_eq!(times.first(), Some(&old[range.start]));
        debug_assert_eq!(times.last(), Some(&old[range.end]));
        let mut t = Vec::with_capacity(old.len() + times.len());
        t.extend_from_slice(&old[..range.start]);
        t.extend_from_slice(&times[..times.len() - 1]);
        t.extend_from_slice(&old[range.end..]);
        let mut inc = Vec::with_capacity(self.increments.len() + increments.len());
        inc.extend_from_slice(&self.increments[..range.start]);
        inc.extend_from_slice(increments);
        inc.extend_from_slice(&self.increments[range.end..]);
        let grid = TimeGrid::from_times(t, self.grid.end()).expect("splice keeps order");
        Self::build(grid, inc, self.seed)
    }
}

/// Split an increment `dw` over `[t0, t1]` at `tm` using the Brownian bridge.
pub(crate) fn bridge_split<R: Rng>(t0: f64, tm: f64, t1: f64, dw: f64, rng: &mut R) -> (f64, f64) {
    let dt = t1 - t0;
    let l = tm - t0;
    let r = t1 - tm;
    let z: f64 = rng.sample(StandardNormal);
    let left = dw * (l / dt) + (l * r / dt).sqrt() * z;
    (left, dw - left)
}

fn check_len(path: &BrownianPath, found: usize) -> Result<()> {
    if found != path.n_cells() {
        return Err(Error::LengthMismatch {
            expected: path.n_cells(),
            found,
        });
    }
    Ok(())
}

/// `Σ_k φ_k ΔW_k`.
pub fn ito_sum(path: &BrownianPath, integrand: &[f64]) -> Result<f64> {
    check_len(path, integrand.len())?;
    Ok(integrand
        .iter()
        .zip(path.increments())
        .map(|(f, dw)| f * dw)
        .sum())
}

/// Running sums at every grid time, starting with 0 at `t_0`.
pub fn ito_path(path: &BrownianPath, integrand: &[f64]) -> Result<Vec<f64>> {
    check_len(path, integrand.len())?;
    let mut out = Vec::with_capacity(integrand.len() + 1);
    let mut acc = 0.0;
    out.push(acc);
    for (f, dw) in integrand.iter().zip(path.increments()) {
        acc += f * dw;
        out.push(acc);
    }
    Ok(out)
}

fn check_dims(integrand: &[VectorPathValue]) -> Result<usize> {
    let dim = integrand.first().map(|v| v.dim()).unwrap_or(0);
    if dim == 0 {
        return Err(Error::EmptyInput("vector integrand"));
    }
    if let Some(v) = integrand.iter().find(|v| v.dim() != dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            found: v.dim(),
        });
    }
    Ok(dim)
}

/// Componentwise Itô sum of a vector integrand.
pub fn vector_ito_sum(path: &BrownianPath, integrand: &[VectorPathValue]) -> Result<VectorPathValue> {
    check_len(path, integrand.len())?;
    let dim = check_dims(integrand)?;
    let mut acc = vec![0.0; dim];
    for (v, dw) in integrand.iter().zip(path.increments()) {
        for (a, c) in acc.iter_mut().zip(&v.0) {
            *a += c * dw;
        }
    }
    Ok(VectorPathValue(acc))
}

/// Running vector sums at every grid time.
pub fn vector_ito_path(
    path: &BrownianPath,
    integrand: &[VectorPathValue],
) -> Result<Vec<VectorPathValue>> {
    check_len(path, integrand.len())?;
    let dim = check_dims(integrand)?;
    let mut acc = vec![0.0; dim];
    let mut out = Vec::with_capacity(integrand.len() + 1);
    out.push(VectorPathValue(acc.clone()));
    for (v, dw) in integrand.iter().zip(path.increments()) {
        for (a, c) in acc.iter_mut().zip(&v.0) {
            *a += c * dw;
        }
        out.push(VectorPathValue(acc.clone()));
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QuadraticVariation {
    /// `Σ g_k² Δt_k`
    pub predictable: f64,
    /// `Σ (g_k ΔW_k)²`
    pub realized: f64,
}

pub fn quadratic_variation(path: &BrownianPath, integrand: &[f64]) -> Result<QuadraticVariation> {
    check_len(path, integrand.len())?;
    let mut predictable = 0.0;
    let mut realized = 0.0;
    for ((g, dw), dt) in integrand.iter().zip(path.increments()).zip(path.grid().steps()) {
        predictable += g * g * dt;
        let dm = g * dw;
        realized += dm * dm;
    }
    Ok(QuadraticVariation {
        predictable,
        realized,
    })
}

/// Realized quadratic variation of an arbitrary discretely observed path.
pub fn realized_qv(values: &[f64]) -> f64 {
    values.windows(2).map(|w| (w[1] - w[0]).powi(2)).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::McEstimate;

    fn unit_path(n: usize, seed: u64) -> BrownianPath {
        sample_path(&TimeGrid::uniform(0.0, 1.0, n).unwrap(), StreamKey::new(seed))
    }

    #[test]
    fn determinism() {
        let g = TimeGrid::uniform(0.0, 1.0, 50).unwrap();
        let a = sample_path(&g, StreamKey::new(3).path(9));
        let b = sample_path(&g, StreamKey::new(3).path(9));
        assert_eq!(a.increments(), b.increments());
        assert_eq!(a.values()[0], 0.0);
        assert_eq!(a.increments().len(), g.times().len() - 1);
    }

    #[test]
    fn w1_moments() {
        let g = TimeGrid::uniform(0.0, 1.0, 8).unwrap();
        let key = StreamKey::new(11);
        let w1: Vec<f64> = (0..100_000)
            .map(|i| *sample_path(&g, key.path(i)).values().last().unwrap())
            .collect();
        let mean = McEstimate::from_samples(&w1);
        assert!(mean.mean.abs() < 3.0 * mean.stderr, "{mean:?}");
        let sq: Vec<f64> = w1.iter().map(|x| x * x).collect();
        let var = McEstimate::from_samples(&sq);
        assert!((var.mean - 1.0).abs() < 3.0 * var.stderr, "{var:?}");
    }

    #[test]
    fn ito_sum_examples() {
        let p = unit_path(16, 4);
        let w1 = *p.values().last().unwrap();
        let ones = vec![1.0; 16];
        assert!((ito_sum(&p, &ones).unwrap() - w1).abs() < 1e-14);
        assert_eq!(ito_sum(&p, &[0.0; 16]).unwrap(), 0.0);
        let pm: Vec<f64> = (0..16).map(|k| if k < 8 { 1.0 } else { -1.0 }).collect();
        let w_half = p.value_at(0.5).unwrap();
        assert!((ito_sum(&p, &pm).unwrap() - (2.0 * w_half - w1)).abs() < 1e-14);
        assert!(matches!(
            ito_sum(&p, &[1.0; 3]),
            Err(Error::LengthMismatch { expected: 16, found: 3 })
        ));
    }

    #[test]
    fn vector_examples() {
        let p = unit_path(10, 5);
        let w1 = *p.values().last().unwrap();
        let phi = vec![VectorPathValue(vec![1.0, 0.0]); 10];
        let v = vector_ito_sum(&p, &phi).unwrap();
        assert!((v.0[0] - w1).abs() < 1e-14);
        assert_eq!(v.0[1], 0.0);
        let mut bad = phi.clone();
        bad[3] = VectorPathValue(vec![1.0]);
        assert!(matches!(
            vector_ito_sum(&p, &bad),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn quadratic_variation_examples() {
        let p = unit_path(32, 6);
        let qv = quadratic_variation(&p, &vec![1.0; 32]).unwrap();
        assert!((qv.predictable - 1.0).abs() < 1e-14);
        let z = quadratic_variation(&p, &vec![0.0; 32]).unwrap();
        assert_eq!(z.predictable, 0.0);
        assert_eq!(z.realized, 0.0);
        let key = StreamKey::new(99);
        let g = TimeGrid::uniform(0.0, 1.0, 32).unwrap();
        let r: Vec<f64> = (0..10_000)
            .map(|i| {
                let p = sample_path(&g, key.path(i));
                quadratic_variation(&p, &vec![1.0; 32]).unwrap().realized
            })
            .collect();
        let e = McEstimate::from_samples(&r);
        assert!((e.mean - 1.0).abs() < 3.0 * e.stderr, "{e:?}");
    }

    #[test]
    fn l0_metric_examples() {
        assert_eq!(l0_metric(&[0.0, 0.0]).unwrap().value(), 0.0);
        assert_eq!(l0_metric(&[1.0, 3.0, 7.5]).unwrap().value(), 1.0);
        assert_eq!(l0_metric(&[0.5, 1.5]).unwrap().value(), 0.75);
        assert!(l0_metric(&[]).is_err());
        assert!(l0_metric(&[-1.0]).is_err());
    }

    #[test]
    fn dyadic_refinement_preserves_coarse_values() {
        let p = unit_path(8, 12);
        let r = p.refine_dyadic(StreamKey::new(13));
        assert_eq!(r.n_cells(), 16);
        for (k, t) in p.times().iter().enumerate() {
            let v = r.value_at(*t).unwrap();
            assert!((v - p.values()[k]).abs() < 1e-13);
        }
    }

    #[test]
    fn refinement_consistency_for_step_integrands() {
        // Integrand with breakpoints on the coarse grid: sums agree exactly
        // up to summation order.
        let p = unit_path(8, 21);
        let r = p.refine_dyadic(StreamKey::new(22)).refine_dyadic(StreamKey::new(23));
        let coarse: Vec<f64> = (0..8).map(|k| (k as f64 - 3.5).powi(2)).collect();
        let fine: Vec<f64> = r
            .times()
            .iter()
            .take(r.n_cells())
            .map(|t| coarse[p.grid().floor_index(*t)])
            .collect();
        let a = ito_sum(&p, &coarse).unwrap();
        let b = ito_sum(&r, &fine).unwrap();
        assert!((a - b).abs() < 1e-12, "{a} vs {b}");
    }

    #[test]
    fn resample_after_keeps_prefix() {
        let p = unit_path(8, 30);
        let q = p.resample_after(0.5, StreamKey::new(31));
        assert_eq!(p.value_at(0.5).unwrap(), q.value_at(0.5).unwrap());
        assert_ne!(p.values().last(), q.values().last());
    }

    #[test]
    fn martingale_property_for_adapted_integrand() {
        let g = TimeGrid::uniform(0.0, 1.0, 20).unwrap();
        let key = StreamKey::new(40);
        let s: Vec<f64> = (0..20_000)
            .map(|i| {
                let p = sample_path(&g, key.path(i));
                let phi: Vec<f64> = p.values()[..20].iter().map(|w| w.signum()).collect();
                ito_sum(&p, &phi).unwrap()
            })
            .collect();
        let e = McEstimate::from_samples(&s);
        assert!(e.mean.abs() < 3.0 * e.stderr, "{e:?}");
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn weak_strong_identity(seed in 0u64..1000, coeffs in proptest::collection::vec(-3.0f64..3.0, 24)) {
                let p = unit_path(8, seed);
                let phi: Vec<VectorPathValue> =
                    coeffs.chunks(3).map(|c| VectorPathValue(c.to_vec())).collect();
                let v = vector_ito_sum(&p, &phi).unwrap();
                for i in 0..3 {
                    let scalar: Vec<f64> = phi.iter().map(|x| x.0[i]).collect();
                    prop_assert_eq!(v.0[i], ito_sum(&p, &scalar).unwrap());
                }
            }

            #[test]
            fn same_seed_same_path(seed in any::<u64>(), n in 1usize..40) {
                let g = TimeGrid::uniform(0.0, 2.0, n).unwrap();
                let a = sample_path(&g, StreamKey::new(seed));
                let b = sample_path(&g, StreamKey::new(seed));
                prop_assert_eq!(a.increments(), b.increments());
            }
        }
    }
}
