//! Weighted harmonic extension to the half plane and its Neumann trace.
//!
//! The five-point finite-volume scheme for `∇·(y^{1-2s}∇V) = 0` is diagonal in
//! the periodic x-direction after a DFT, leaving one tridiagonal solve in `y`
//! per frequency.

use super::check_order;
use crate::error::{Error, Result};
use crate::grid::Grid;
use nalgebra::DMatrix;
use rustfft::{num_complex::Complex64, FftPlanner};
use statrs::function::gamma::gamma;

/// `a_{1,s} = 2^{1-2s} Γ(1-s) / Γ(s)`.
pub fn trace_constant(s: f64) -> f64 {
    2f64.powf(1.0 - 2.0 * s) * gamma(1.0 - s) / gamma(s)
}

#[derive(Clone, Debug)]
pub struct CsExtensionField {
    pub s: f64,
    /// Graded levels `y_0 = 0 < ... < y_J = Y_max`.
    pub y: Vec<f64>,
    /// `values[(i, j)] = V(x_i, y_j)`.
    pub values: DMatrix<f64>,
    /// Weighted Neumann trace `lim y^{1-2s} ∂_y V` at `y = 0`.
    pub trace: Vec<f64>,
    /// `∫ y^{1-2s} |∇V|²` for the discrete solution.
    pub energy: f64,
}

pub fn cs_extend(grid: &Grid, v: &[f64], s: f64, levels: usize, y_max: f64) -> Result<CsExtensionField> {
    check_order(s)?;
    if grid.dim() != 1 {
        return Err(Error::InvalidParameter("extension solve needs n = 1".into()));
    }
    if levels < 16 {
        return Err(Error::Mesh(format!("need at least 16 y-levels, got {levels}")));
    }
    if !(y_max > 0.0) {
        return Err(Error::Mesh(format!("Y_max must be positive, got {y_max}")));
    }
    let n = grid.len();
    assert_eq!(v.len(), n, "boundary data must be sampled on the grid");
    let jn = levels;
    let p = 1.0 - 2.0 * s;
    let y: Vec<f64> = (0..=jn)
        .map(|j| y_max * (j as f64 / jn as f64).powf(1.0 / (1.0 - s)))
        .collect();
    let mid: Vec<f64> = (0..jn).map(|j| 0.5 * (y[j] + y[j + 1])).collect();
    // conductance across [y_j, y_{j+1}] and weighted cell masses
    let cond: Vec<f64> = (0..jn).map(|j| mid[j].powf(p) / (y[j + 1] - y[j])).collect();
    let prim = |t: f64| t.powf(2.0 - 2.0 * s) / (2.0 - 2.0 * s);
    let mut mass = vec![0.0; jn + 1];
    mass[0] = prim(mid[0]);
    for j in 1..jn {
        mass[j] = prim(mid[j]) - prim(mid[j - 1]);
    }
    mass[jn] = prim(y[jn]) - prim(mid[jn - 1]);

    let h = grid.spacing();
    let mut vhat: Vec<Complex64> = v.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(n).process(&mut vhat);

    let mut profiles = vec![vec![0.0; jn + 1]; n];
    let mut trace_hat = vec![Complex64::new(0.0, 0.0); n];
    let mut energy = 0.0;
    for k in 0..n {
        let kappa2 = (2.0 / h * (std::f64::consts::PI * k as f64 / n as f64).sin()).powi(2);
        let phi = mode_profile(&cond, &mass, kappa2);
        let flux0 = cond[0] * (phi[1] - phi[0]) - kappa2 * mass[0] * phi[0];
        trace_hat[k] = vhat[k] * flux0;
        let mut e = 0.0;
        for j in 0..jn {
            e += cond[j] * (phi[j + 1] - phi[j]).powi(2);
        }
        for j in 0..=jn {
            e += kappa2 * mass[j] * phi[j] * phi[j];
        }
        energy += h * vhat[k].norm_sqr() / n as f64 * e;
        profiles[k] = phi;
    }

    let inverse = planner.plan_fft_inverse(n);
    let mut values = DMatrix::zeros(n, jn + 1);
    for j in 0..=jn {
        let mut col: Vec<Complex64> = (0..n).map(|k| vhat[k] * profiles[k][j]).collect();
        inverse.process(&mut col);
        for i in 0..n {
            values[(i, j)] = col[i].re / n as f64;
        }
    }
    // the Dirichlet level is the data itself
    for i in 0..n {
        values[(i, 0)] = v[i];
    }
    inverse.process(&mut trace_hat);
    let trace = trace_hat.iter().map(|c| c.re / n as f64).collect();
    Ok(CsExtensionField { s, y, values, trace, energy })
}

/// Solution of the discrete mode problem with unit value at `y = 0`.
fn mode_profile(cond: &[f64], mass: &[f64], kappa2: f64) -> Vec<f64> {
    let jn = cond.len();
    // unknowns φ_1..φ_J; row j: -c_{j-1} φ_{j-1} + (c_{j-1} + c_j + κ² m_j) φ_j - c_j φ_{j+1} = 0
    let mut sub = vec![0.0; jn];
    let mut diag = vec![0.0; jn];
    let mut sup = vec![0.0; jn];
    let mut rhs = vec![0.0; jn];
    for r in 0..jn {
        let j = r + 1;
        let right = if j < jn { cond[j] } else { 0.0 };
        diag[r] = cond[j - 1] + right + kappa2 * mass[j];
        sup[r] = -right;
        if r > 0 {
            sub[r] = -cond[j - 1];
        } else {
            rhs[r] = cond[0];
        }
    }
    // Thomas algorithm; the matrix is diagonally dominant
    for r in 1..jn {
        let w = sub[r] / diag[r - 1];
        diag[r] -= w * sup[r - 1];
        rhs[r] -= w * rhs[r - 1];
    }
    let mut phi = vec![0.0; jn + 1];
    phi[0] = 1.0;
    phi[jn] = rhs[jn - 1] / diag[jn - 1];
    for r in (0..jn - 1).rev() {
        phi[r + 1] = (rhs[r] - sup[r] * phi[r + 2]) / diag[r];
    }
    phi
}
