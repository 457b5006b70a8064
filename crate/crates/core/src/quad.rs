//! One-dimensional quadrature on top of the `quadrature` crate's
//! double-exponential rule, which tolerates integrable endpoint
//! singularities.

use quadrature::double_exponential;

const PIECES: usize = 8;

/// `∫_a^b f`, split into equal pieces to stay within the rule's fixed
/// evaluation budget.
pub fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    let h = (b - a) / PIECES as f64;
    (0..PIECES)
        .map(|i| {
            let lo = a + i as f64 * h;
            let hi = if i + 1 == PIECES { b } else { lo + h };
            double_exponential::integrate(&f, lo, hi, tol / PIECES as f64).integral
        })
        .sum()
}

/// `∫_a^∞ f` through `x = a + u/(1-u)`.
pub fn integrate_to_infinity(f: impl Fn(f64) -> f64, a: f64, tol: f64) -> f64 {
    let g = |u: f64| {
        if u >= 1.0 {
            return 0.0;
        }
        let v = 1.0 - u;
        f(a + u / v) / (v * v)
    };
    // Most of the mass of slowly decaying integrands sits near u = 1; give
    // that end its own geometric pieces.
    let mut total = integrate(g, 0.0, 0.5, tol / 2.0);
    let mut lo = 0.5;
    for _ in 0..24 {
        let hi = 1.0 - (1.0 - lo) / 4.0;
        total += double_exponential::integrate(g, lo, hi, tol / 48.0).integral;
        lo = hi;
    }
    total + double_exponential::integrate(g, lo, 1.0, tol / 48.0).integral
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finite_and_singular() {
        let v = integrate(|x| x * x, 0.0, 3.0, 1e-12);
        assert!((v - 9.0).abs() < 1e-10);
        let v = integrate(|x| x.powf(-0.5), 0.0, 1.0, 1e-10);
        assert!((v - 2.0).abs() < 1e-7, "{v}");
    }

    #[test]
    fn half_infinite() {
        let v = integrate_to_infinity(|x| (-x).exp(), 0.0, 1e-12);
        assert!((v - 1.0).abs() < 1e-9, "{v}");
        // Slow polynomial decay.
        let v = integrate_to_infinity(|x| x.powf(-1.5), 1.0, 1e-10);
        assert!((v - 2.0).abs() < 1e-5, "{v}");
    }
}
