//! Quadrature of `c P.V.∫ (u(x) - u(y)) |x - y|^{-1-2s} dy` on the periodic grid.
//!
//! Near the diagonal (`|x - y| < h`) the integrand is replaced by its Taylor
//! expansion, giving a second difference with weight `h^{2-2s}/(2-2s)`. The far
//! field integrates the piecewise-linear interpolant of `u` exactly against the
//! kernel. The kernel is summed over all periodic images, the tail by
//! Euler-Maclaurin. The constant is fixed by matching the symbol `|ξ|^{2s}` at
//! the lowest grid frequency.

use super::{check_order, circulant, FracLapOperator, Provenance};
use crate::error::{Error, Result};
use crate::grid::Grid;
use statrs::function::gamma::gamma;

/// `(b^p - a^p) / p`, continuous through `p = 0`.
fn power_diff(a: f64, b: f64, p: f64) -> f64 {
    let l = (b / a).ln();
    let x = p * l;
    let ratio = if x == 0.0 { 1.0 } else { x.exp_m1() / x };
    a.powf(p) * l * ratio
}

/// Hat-function moment `∫ φ_d(t) t^{-1-2s} dt` over `t ≥ 1`, in units of `h^{-2s}`.
fn hat_weight(d: u64, s: f64) -> f64 {
    let p = 1.0 - 2.0 * s;
    let df = d as f64;
    if d == 1 {
        return (1.0 - power_diff(1.0, 2.0, p)) / (2.0 * s);
    }
    if d >= 64 {
        // ∫(1-|τ|) f(d+τ) dτ = f + f''/12 + f''''/360 + ...
        let a = 1.0 + 2.0 * s;
        let inv2 = 1.0 / (df * df);
        return df.powf(-a)
            * (1.0
                + a * (a + 1.0) / 12.0 * inv2
                + a * (a + 1.0) * (a + 2.0) * (a + 3.0) / 360.0 * inv2 * inv2);
    }
    -(power_diff(df, df + 1.0, p) - power_diff(df - 1.0, df, p)) / (2.0 * s)
}

/// Total weight of periodic offset `d` (1 ≤ d < N), summed over all images.
fn periodized_weight(d: usize, n: usize, s: f64) -> f64 {
    const EXPLICIT_IMAGES: u64 = 48;
    let (d, n) = (d as u64, n as u64);
    let mut total = 0.0;
    for m in 0..=EXPLICIT_IMAGES {
        total += hat_weight(d + m * n, s);
        if m >= 1 {
            total += hat_weight(m * n - d, s);
        }
    }
    let a = 1.0 + 2.0 * s;
    let nf = n as f64;
    let tail = |shift: f64| -> f64 {
        // Σ_{m > EXPLICIT_IMAGES} (m N + shift)^{-a}
        let m0 = (EXPLICIT_IMAGES + 1) as f64;
        let x0 = m0 * nf + shift;
        x0.powf(1.0 - a) / (nf * (a - 1.0)) + 0.5 * x0.powf(-a) + a * nf * x0.powf(-a - 1.0) / 12.0
    };
    total + tail(d as f64) + tail(-(d as f64))
}

/// Unnormalized first row in units of `h^{-2s}`: off-diagonals `-W(d)`.
fn raw_row(n: usize, s: f64) -> Vec<f64> {
    let near = 1.0 / (2.0 - 2.0 * s);
    let mut row = vec![0.0; n];
    for d in 1..n {
        let mut w = periodized_weight(d, n, s);
        if d == 1 || d == n - 1 {
            w += near;
        }
        row[d] = -w;
    }
    row[0] = -row[1..].iter().sum::<f64>();
    row
}

fn raw_symbol(row: &[f64], theta: f64) -> f64 {
    row.iter()
        .enumerate()
        .skip(1)
        .map(|(d, w)| -w * (1.0 - (theta * d as f64).cos()))
        .sum()
}

/// The normalizing constant fitted at the lowest grid frequency.
pub fn singular_calibration(grid: &Grid, s: f64) -> Result<f64> {
    check_order(s)?;
    let row = raw_row(grid.len(), s);
    Ok(calibrate(grid, s, &row))
}

fn calibrate(grid: &Grid, s: f64, row: &[f64]) -> f64 {
    let h = grid.spacing();
    let xi = grid.wavenumber(1);
    xi.powf(2.0 * s) / (h.powf(-2.0 * s) * raw_symbol(row, xi * h))
}

/// The whole-line constant `c_{1,s} = 4^s Γ(1/2 + s) / (√π |Γ(-s)|)`.
pub fn exact_constant(s: f64) -> f64 {
    4f64.powf(s) * gamma(0.5 + s) / (std::f64::consts::PI.sqrt() * gamma(-s).abs())
}

pub fn assemble_singular_integral(grid: &Grid, s: f64) -> Result<FracLapOperator> {
    check_order(s)?;
    if grid.dim() != 1 {
        return Err(Error::InvalidParameter("singular-integral assembly needs n = 1".into()));
    }
    let mut row = raw_row(grid.len(), s);
    let scale = calibrate(grid, s, &row) * grid.spacing().powf(-2.0 * s);
    for v in row.iter_mut() {
        *v *= scale;
    }
    Ok(FracLapOperator {
        s,
        matrix: circulant(&row),
        provenance: Provenance::SingularIntegral,
        grid: grid.clone(),
    })
}
