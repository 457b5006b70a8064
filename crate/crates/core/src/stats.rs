//! Statistical helpers shared by the Monte Carlo checks.

use serde::Serialize;

use crate::error::{Error, Result};

/// Sample mean with its Monte Carlo standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub n: usize,
}

impl McEstimate {
    /// Panics on an empty slice.
    pub fn from_samples(xs: &[f64]) -> Self {
        assert!(!xs.is_empty(), "no samples");
        let n = xs.len();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let stderr = if n > 1 {
            let ss: f64 = xs.iter().map(|x| (x - mean).powi(2)).sum();
            (ss / (n - 1) as f64 / n as f64).sqrt()
        } else {
            0.0
        };
        Self { mean, stderr, n }
    }

    /// Fraction of samples satisfying `pred`.
    pub fn proportion<T>(xs: &[T], pred: impl Fn(&T) -> bool) -> Self {
        let ind: Vec<f64> = xs.iter().map(|x| if pred(x) { 1.0 } else { 0.0 }).collect();
        Self::from_samples(&ind)
    }

    /// `|mean - target| <= k * stderr`
    pub fn within(&self, target: f64, k: f64) -> bool {
        (self.mean - target).abs() <= k * self.stderr
    }
}

pub fn sorted(xs: &[f64]) -> Vec<f64> {
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    v
}

/// Empirical quantile by linear interpolation on a sorted sample.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty());
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let w = pos - lo as f64;
    sorted[lo] * (1.0 - w) + sorted[hi] * w
}

pub fn median(xs: &[f64]) -> f64 {
    quantile_sorted(&sorted(xs), 0.5)
}

/// Kolmogorov–Smirnov distance `sup_x |F_n(x) - F(x)|` for a sorted sample.
pub fn ks_statistic(sorted_samples: &[f64], cdf: impl Fn(f64) -> f64) -> Result<f64> {
    if sorted_samples.is_empty() {
        return Err(Error::EmptyInput("ks samples"));
    }
    if sorted_samples.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::Unsupported("ks_statistic expects sorted samples".into()));
    }
    let n = sorted_samples.len() as f64;
    let mut d: f64 = 0.0;
    for (i, x) in sorted_samples.iter().enumerate() {
        let f = cdf(*x);
        d = d.max((i as f64 + 1.0) / n - f).max(f - i as f64 / n);
    }
    Ok(d.clamp(0.0, 1.0))
}

/// Slope of an ordinary least-squares fit of `ln y` on `ln x`.
pub fn log_log_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    ols_slope(&lx, &ly)
}

fn ols_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

/// Raw (non-excess) kurtosis `E(X-μ)^4 / σ^4`.
pub fn kurtosis(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let m2 = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n;
    let m4 = xs.iter().map(|x| (x - m).powi(4)).sum::<f64>() / n;
    m4 / (m2 * m2)
}

fn ranks(xs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut r = vec![0.0; xs.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && xs[idx[j + 1]] == xs[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0;
        for k in i..=j {
            r[idx[k]] = avg;
        }
        i = j + 1;
    }
    r
}

/// Spearman rank correlation. Its null standard error is `1/sqrt(n-1)`.
pub fn rank_correlation(x: &[f64], y: &[f64]) -> f64 {
    let rx = ranks(x);
    let ry = ranks(y);
    let n = x.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let sxy: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let syy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    sxy / (sxx * syy).sqrt()
}

/// Polynomial tail-index estimate from a log-log survival regression.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TailIndex {
    pub index: f64,
    pub stderr: f64,
    /// Index implied by each consecutive pair of thresholds.
    pub local: Vec<f64>,
    /// False when the local indices drift, i.e. the decay is not polynomial
    /// over the threshold range.
    pub polynomial: bool,
}

pub const MIN_TAIL_SAMPLES: usize = 1000;
pub const MIN_EXCEEDANCES: usize = 30;

/// Weighted regression of `ln P̂(X > t)` on `ln t`, weights from the binomial
/// variance of the empirical survival.
pub fn tail_index(samples: &[f64], thresholds: &[f64]) -> Result<TailIndex> {
    if samples.len() < MIN_TAIL_SAMPLES {
        return Err(Error::EmptyInput("tail index needs at least 1000 samples"));
    }
    if thresholds.len() < 2 {
        return Err(Error::EmptyInput("tail index needs at least two thresholds"));
    }
    let n = samples.len() as f64;
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut ws = Vec::new();
    for &t in thresholds {
        let count = samples.iter().filter(|x| **x > t).count();
        if count < MIN_EXCEEDANCES {
            return Err(Error::TooFewExceedances {
                threshold: t,
                count,
                required: MIN_EXCEEDANCES,
            });
        }
        let s = count as f64 / n;
        xs.push(t.ln());
        ys.push(s.ln());
        ws.push(n * s / (1.0 - s).max(1.0 / n));
    }
    let sw: f64 = ws.iter().sum();
    let mx = xs.iter().zip(&ws).map(|(x, w)| x * w).sum::<f64>() / sw;
    let my = ys.iter().zip(&ws).map(|(y, w)| y * w).sum::<f64>() / sw;
    let sxx: f64 = xs.iter().zip(&ws).map(|(x, w)| w * (x - mx).powi(2)).sum();
    let sxy: f64 = xs
        .iter()
        .zip(&ys)
        .zip(&ws)
        .map(|((x, y), w)| w * (x - mx) * (y - my))
        .sum();
    let slope = sxy / sxx;
    let local: Vec<f64> = xs
        .windows(2)
        .zip(ys.windows(2))
        .map(|(x, y)| -(y[1] - y[0]) / (x[1] - x[0]))
        .collect();
    let mean_local = local.iter().sum::<f64>() / local.len() as f64;
    let drift = (local.last().unwrap() - local[0]) / mean_local.abs().max(1e-12);
    Ok(TailIndex {
        index: -slope,
        stderr: (1.0 / sxx).sqrt(),
        local,
        polynomial: drift.abs() < 0.5,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand_distr::{Distribution, Exp};

    use crate::rng::StreamKey;

    fn uniform_cdf(x: f64) -> f64 {
        x.clamp(0.0, 1.0)
    }

    #[test]
    fn ks_examples() {
        assert_eq!(ks_statistic(&[0.5], uniform_cdf).unwrap(), 0.5);
        let below = vec![-3.0; 100];
        assert_eq!(ks_statistic(&below, uniform_cdf).unwrap(), 1.0);
        assert!(ks_statistic(&[], uniform_cdf).is_err());
        assert!(ks_statistic(&[0.4, 0.2], uniform_cdf).is_err());
    }

    #[test]
    fn ks_under_the_null() {
        // Kolmogorov distribution: P(sqrt(n) D > 1.95) ≈ 0.001.
        let mut rng = StreamKey::new(5).rng();
        let xs: Vec<f64> = (0..100_000).map(|_| rng.random::<f64>()).collect();
        let d = ks_statistic(&sorted(&xs), uniform_cdf).unwrap();
        assert!(d < 1.95 / (1e5f64).sqrt(), "{d}");
    }

    #[test]
    fn quantiles() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[1.0, 2.0, 3.0, 4.0]), 2.5);
    }

    #[test]
    fn kurtosis_of_gaussian_and_rank_correlation() {
        let mut rng = StreamKey::new(6).rng();
        let z: Vec<f64> = (0..200_000)
            .map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal))
            .collect();
        assert!((kurtosis(&z) - 3.0).abs() < 0.05);
        let y: Vec<f64> = z.iter().map(|x| x.powi(3)).collect();
        assert!((rank_correlation(&z, &y) - 1.0).abs() < 1e-12);
        let (a, b) = z.split_at(100_000);
        assert!(rank_correlation(a, b).abs() < 3.0 / (1e5f64).sqrt());
    }

    #[test]
    fn pareto_tail_index() {
        let mut rng = StreamKey::new(8).rng();
        let xs: Vec<f64> = (0..100_000)
            .map(|_| (1.0 - rng.random::<f64>()).powf(-0.5))
            .collect();
        let est = tail_index(&xs, &[2.0, 4.0, 8.0, 16.0, 30.0]).unwrap();
        assert!((est.index - 2.0).abs() < 0.1, "{est:?}");
        assert!(est.polynomial);
    }

    #[test]
    fn exponential_is_flagged() {
        let mut rng = StreamKey::new(9).rng();
        let e = Exp::new(1.0).unwrap();
        let xs: Vec<f64> = (0..100_000).map(|_| e.sample(&mut rng)).collect();
        let est = tail_index(&xs, &[0.5, 1.0, 2.0, 4.0, 6.0]).unwrap();
        assert!(!est.polynomial, "{est:?}");
        assert!(est.local.windows(2).all(|w| w[1] > w[0]), "{est:?}");
    }

    #[test]
    fn tail_index_errors() {
        assert!(tail_index(&[1.0; 10], &[1.0, 2.0]).is_err());
        let xs: Vec<f64> = (0..2000).map(|i| i as f64).collect();
        assert!(matches!(
            tail_index(&xs, &[1.0, 1990.0]),
            Err(Error::TooFewExceedances { .. })
        ));
    }

    #[test]
    fn log_log_slope_of_power_law() {
        let x = [1.0, 2.0, 4.0, 8.0];
        let y: Vec<f64> = x.iter().map(|v: &f64| 3.0 * v.powf(-0.5)).collect();
        assert!((log_log_slope(&x, &y) + 0.5).abs() < 1e-12);
    }
}
