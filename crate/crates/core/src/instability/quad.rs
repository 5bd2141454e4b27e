//! Gauss–Legendre rules and an adaptive composite integrator.

use crate::error::{Error, Result};

/// Nodes and weights of the `n`-point Gauss–Legendre rule on `(-1, 1)`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        // Chebyshev-type initial guess, then Newton on P_n
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, z);
            dp = d;
            let step = p / d;
            z -= step;
            if step.abs() < 1e-16 {
                let (_, d) = legendre_with_derivative(n, z);
                dp = d;
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

fn legendre_with_derivative(n: usize, z: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, z);
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (z * p1 - p0) / (z * z - 1.0);
    (p1, d)
}

/// Gauss–Legendre rule mapped to `(a, b)`.
pub fn gauss_legendre_on(n: usize, a: f64, b: f64) -> (Vec<f64>, Vec<f64>) {
    let (x, w) = gauss_legendre(n);
    let (c, d) = (0.5 * (a + b), 0.5 * (b - a));
    (x.iter().map(|t| c + d * t).collect(), w.iter().map(|v| d * v).collect())
}

/// Legendre values `P_0(y) .. P_{n-1}(y)`.
pub fn legendre_values(n: usize, y: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(n);
    if n > 0 {
        out.push(1.0);
    }
    if n > 1 {
        out.push(y);
    }
    for k in 1..n.saturating_sub(1) {
        let next = ((2 * k + 1) as f64 * y * out[k] - k as f64 * out[k - 1]) / (k + 1) as f64;
        out.push(next);
    }
    out
}

/// Adaptive bisection with a 10-point rule checked against its two halves.
///
/// Returns the integral or a quadrature error carrying the achieved tolerance.
pub fn adaptive(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64, max_depth: usize) -> Result<f64> {
    let (x, w) = gauss_legendre(10);
    let rule = |lo: f64, hi: f64| -> f64 {
        let (c, d) = (0.5 * (lo + hi), 0.5 * (hi - lo));
        x.iter().zip(&w).map(|(t, wt)| wt * f(c + d * t)).sum::<f64>() * d
    };
    let mut total = 0.0;
    let mut worst = 0.0f64;
    let mut stack = vec![(a, b, rule(a, b), 0usize)];
    while let Some((lo, hi, whole, depth)) = stack.pop() {
        let mid = 0.5 * (lo + hi);
        let (left, right) = (rule(lo, mid), rule(mid, hi));
        let err = (left + right - whole).abs();
        let local_tol = tol * (hi - lo) / (b - a);
        if err <= local_tol.max(1e-3 * tol).max(1e-15 * (left + right).abs()) {
            total += left + right;
        } else if depth >= max_depth {
            total += left + right;
            worst = worst.max(err);
        } else {
            stack.push((lo, mid, left, depth + 1));
            stack.push((mid, hi, right, depth + 1));
        }
    }
    if worst > 0.0 {
        return Err(Error::Quadrature(format!(
            "local error {worst:e} above tolerance {tol:e} at depth {max_depth}"
        )));
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let (x, w) = gauss_legendre(7);
        for p in 0..14 {
            let q: f64 = x.iter().zip(&w).map(|(t, v)| v * t.powi(p)).sum();
            let exact = if p % 2 == 0 { 2.0 / (p as f64 + 1.0) } else { 0.0 };
            assert!((q - exact).abs() < 1e-14, "degree {p}: {q} vs {exact}");
        }
        let (_, w) = gauss_legendre(400);
        assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-13);
    }

    #[test]
    fn adaptive_handles_endpoint_behaviour() {
        let v = adaptive(&|x: f64| x.sqrt(), 0.0, 1.0, 1e-12, 50).unwrap();
        assert!((v - 2.0 / 3.0).abs() < 1e-11);
        let v = adaptive(&|x: f64| (3.0 * x).cos(), 0.0, 2.0, 1e-13, 30).unwrap();
        assert!((v - (6.0f64).sin() / 3.0).abs() < 1e-13);
    }

    #[test]
    fn adaptive_reports_failure() {
        let r = adaptive(&|x: f64| (1.0 / x).sin(), 1e-9, 1.0, 1e-14, 3);
        assert!(matches!(r, Err(Error::Quadrature(_))));
    }
}
