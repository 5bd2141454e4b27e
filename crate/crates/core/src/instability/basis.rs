//! Weighted orthonormal basis of `L²((2, 3))` and its exterior harmonics on `(-1, 1)`.

use super::quad::{adaptive, gauss_legendre_on, legendre_values};
use crate::error::{Error, Result};
use nalgebra::DMatrix;

pub const MAX_K: usize = 16;
const R_LO: f64 = 2.0;
const R_HI: f64 = 3.0;
const MAX_CONDITION: f64 = 1e12;

/// `y = 12/r - 5` maps `r ∈ [2, 3]` onto `[-1, 1]` linearly in `1/r`.
fn reduced(r: f64) -> f64 {
    12.0 / r - 5.0
}

/// Orthonormal `Y_k(r) = r⁻¹(r² − 1)^{−s} h_k(r)` with `h_k ∈ span{r⁻ʲ : j ≤ k}`.
#[derive(Clone, Debug)]
pub struct WeightedBasis1D {
    pub s: f64,
    /// `h_k = Σ_j legendre[(k, j)] P_j(12/r − 5)`, lower triangular.
    pub legendre: DMatrix<f64>,
    /// `h_k = Σ_j monomial[(k, j)] r^{−j}`.
    pub monomial: DMatrix<f64>,
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    /// `Y_k` at the quadrature nodes, one row per `k`.
    pub y: DMatrix<f64>,
    /// `g_k = h_k / (r²(r² − 1)^{2s})` at the quadrature nodes.
    pub g: DMatrix<f64>,
    /// Condition number of the dictionary Gram matrix actually orthogonalized.
    pub dictionary_condition: f64,
    pub gram_defect: f64,
    pub moment_defect: f64,
}

impl WeightedBasis1D {
    pub fn len(&self) -> usize {
        self.legendre.nrows()
    }
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
    pub fn h(&self, k: usize, r: f64) -> f64 {
        let p = legendre_values(k + 1, reduced(r));
        (0..=k).map(|j| self.legendre[(k, j)] * p[j]).sum()
    }
    /// `Y_k(r)`; zero outside `(2, 3]`.
    pub fn eval(&self, k: usize, r: f64) -> f64 {
        if !(r > R_LO && r <= R_HI) {
            return 0.0;
        }
        self.h(k, r) / (r * (r * r - 1.0).powf(self.s))
    }
    pub fn g_eval(&self, k: usize, r: f64) -> f64 {
        self.h(k, r) / (r * r * (r * r - 1.0).powf(2.0 * self.s))
    }
    /// `∫_2^3 r^{−j} g_k dr`.
    pub fn moment(&self, k: usize, j: usize) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .enumerate()
            .map(|(i, (r, w))| w * r.powi(-(j as i32)) * self.g[(k, i)])
            .sum()
    }
    /// `max_{j,k} (|∫ r^{−j} g_k| − 2^{−1−j})`, including `j ≥ k`.
    pub fn envelope_excess(&self, j_max: usize) -> f64 {
        let mut worst = f64::NEG_INFINITY;
        for k in 0..self.len() {
            for j in 0..=j_max {
                worst = worst.max(self.moment(k, j).abs() - 0.5f64.powi(j as i32 + 1));
            }
        }
        worst
    }
    /// Table of monomial coefficients, one line per `k`.
    pub fn write_dump<W: std::io::Write>(&self, mut w: W) -> Result<()> {
        let k = self.len();
        let header: Vec<String> = (0..k).map(|j| format!("r^-{j}")).collect();
        writeln!(w, "# s={} K={k} dictionary_condition={:e}", self.s, self.dictionary_condition)?;
        writeln!(w, "k,{}", header.join(","))?;
        for row in 0..k {
            let cells: Vec<String> = (0..k).map(|j| format!("{:.17e}", self.monomial[(row, j)])).collect();
            writeln!(w, "{row},{}", cells.join(","))?;
        }
        Ok(())
    }
}

/// Monomial coefficients in `x = 1/r` of `P_0(12x − 5) .. P_{n−1}(12x − 5)`.
fn legendre_to_monomial(n: usize) -> DMatrix<f64> {
    let mut c = DMatrix::zeros(n, n);
    if n == 0 {
        return c;
    }
    c[(0, 0)] = 1.0;
    if n > 1 {
        c[(1, 0)] = -5.0;
        c[(1, 1)] = 12.0;
    }
    for k in 1..n.saturating_sub(1) {
        let (a, b) = ((2 * k + 1) as f64 / (k + 1) as f64, k as f64 / (k + 1) as f64);
        for j in 0..=k + 1 {
            let mut v = -b * if j <= k - 1 { c[(k - 1, j)] } else { 0.0 };
            if j <= k {
                v += a * -5.0 * c[(k, j)];
            }
            if j >= 1 {
                v += a * 12.0 * c[(k, j - 1)];
            }
            c[(k + 1, j)] = v;
        }
    }
    c
}

/// Modified Gram–Schmidt with one reorthogonalization pass in
/// `(h₁, h₂)_s = ∫_2^3 r^{−2}(r² − 1)^{−2s} h₁ h₂ dr`.
///
/// The dictionary is the Legendre family in `1/r`, which spans the same nested
/// spaces as `{r^{−j}}` without its conditioning.
pub fn gram_schmidt_weighted(k: usize, s: f64, quad_points: usize) -> Result<WeightedBasis1D> {
    if quad_points < 400 {
        return Err(Error::InvalidParameter(format!("{quad_points} quadrature points, need at least 400")));
    }
    let (nodes, weights) = gauss_legendre_on(quad_points, R_LO, R_HI);
    orthonormalize(k, s, nodes, weights)
}

/// The same construction with the nodal rule `h Σ_i` over the W1 nodes as the
/// quadrature, so orthonormality and the moment conditions hold exactly for
/// grid functions.
pub fn gram_schmidt_on_grid(k: usize, s: f64, part: &crate::grid::DomainPartition) -> Result<WeightedBasis1D> {
    let nodes: Vec<f64> = part.idx_w1.iter().map(|&i| part.grid.node(i)).collect();
    if nodes.iter().any(|r| !(*r > R_LO && *r <= R_HI)) || nodes.len() < k {
        return Err(Error::InvalidParameter(format!(
            "W1 must hold at least K = {k} nodes inside (2, 3], found {}",
            nodes.len()
        )));
    }
    let weights = vec![part.spacing(); nodes.len()];
    orthonormalize(k, s, nodes, weights)
}

pub(super) fn orthonormalize(k: usize, s: f64, nodes: Vec<f64>, weights: Vec<f64>) -> Result<WeightedBasis1D> {
    crate::fractional::check_order(s)?;
    if k == 0 || k > MAX_K {
        return Err(Error::InvalidParameter(format!("K = {k} must lie in 1..={MAX_K}")));
    }
    let q = nodes.len();
    let rho: Vec<f64> = nodes.iter().map(|r| r.powi(-2) * (r * r - 1.0).powf(-2.0 * s)).collect();
    // weighted samples: the Euclidean product of columns is (·,·)_s
    let mut v = DMatrix::zeros(q, k);
    for (i, r) in nodes.iter().enumerate() {
        let p = legendre_values(k, reduced(*r));
        let sw = (weights[i] * rho[i]).sqrt();
        for j in 0..k {
            v[(i, j)] = sw * p[j];
        }
    }
    let gram = v.transpose() * &v;
    let eig = gram.clone().symmetric_eigen();
    let (lo, hi) = eig.eigenvalues.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &e| (a.min(e), b.max(e)));
    let condition = hi / lo;
    if !(lo > 0.0) || condition > MAX_CONDITION {
        return Err(Error::Conditioning(condition));
    }

    let mut qmat = DMatrix::<f64>::zeros(q, k);
    let mut coef = DMatrix::<f64>::zeros(k, k);
    for j in 0..k {
        let mut w = v.column(j).into_owned();
        let mut c = nalgebra::DVector::<f64>::zeros(k);
        c[j] = 1.0;
        for _pass in 0..2 {
            for i in 0..j {
                let proj = qmat.column(i).dot(&w);
                w -= proj * qmat.column(i);
                c -= proj * coef.row(i).transpose();
            }
        }
        let norm = w.norm();
        w /= norm;
        c /= norm;
        if c[j] < 0.0 {
            w = -w;
            c = -c;
        }
        qmat.set_column(j, &w);
        coef.set_row(j, &c.transpose());
    }

    let mono = &coef * legendre_to_monomial(k);
    let mut y = DMatrix::zeros(k, q);
    let mut g = DMatrix::zeros(k, q);
    for (i, r) in nodes.iter().enumerate() {
        let p = legendre_values(k, reduced(*r));
        for row in 0..k {
            let h: f64 = (0..=row).map(|j| coef[(row, j)] * p[j]).sum();
            y[(row, i)] = h / (r * (r * r - 1.0).powf(s));
            g[(row, i)] = h / (r * r * (r * r - 1.0).powf(2.0 * s));
        }
    }
    let mut basis = WeightedBasis1D {
        s,
        legendre: coef,
        monomial: mono,
        nodes,
        weights,
        y,
        g,
        dictionary_condition: condition,
        gram_defect: 0.0,
        moment_defect: 0.0,
    };
    let mut gram_defect = 0.0f64;
    for a in 0..k {
        for b in 0..k {
            let ip: f64 = (0..q).map(|i| basis.weights[i] * basis.y[(a, i)] * basis.y[(b, i)]).sum();
            let target = if a == b { 1.0 } else { 0.0 };
            gram_defect = gram_defect.max((ip - target).abs());
        }
    }
    let mut moment_defect = 0.0f64;
    for kk in 0..k {
        for j in 0..kk {
            moment_defect = moment_defect.max(basis.moment(kk, j).abs());
        }
    }
    basis.gram_defect = gram_defect;
    basis.moment_defect = moment_defect;
    if gram_defect > 1e-10 || moment_defect > 1e-9 {
        return Err(Error::Conditioning(condition));
    }
    Ok(basis)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Normalization {
    Unit,
    Fixed(f64),
}

impl Normalization {
    fn constant(self) -> f64 {
        match self {
            Normalization::Unit => 1.0,
            Normalization::Fixed(c) => c,
        }
    }
}

/// `Ỹ_k` on `(-1, 1)` through the Poisson formula.
#[derive(Clone, Debug)]
pub struct ExteriorHarmonic {
    pub k: usize,
    pub x: Vec<f64>,
    pub values: Vec<f64>,
    pub l2_norm: f64,
    /// `∫ r^{−j} g_k dr` for `j = 0..=j_max`.
    pub series: Vec<f64>,
    pub constant: f64,
}

const POISSON_TOL: f64 = 1e-13;
const SERIES_TERMS: usize = 60;

/// `c(1 − x²)^s ∫_2^3 (r − x)^{−1} Y_k(r)(r² − 1)^{−s} dr` by adaptive quadrature.
pub fn poisson_value(basis: &WeightedBasis1D, k: usize, x: f64, normalization: Normalization) -> Result<f64> {
    let s = basis.s;
    let f = |r: f64| basis.h(k, r) / (r * (r * r - 1.0).powf(2.0 * s) * (r - x));
    let integral = adaptive(&f, R_LO, R_HI, POISSON_TOL, 40)?;
    Ok(normalization.constant() * (1.0 - x * x).powf(s) * integral)
}

/// Truncated geometric-series form `c(1 − x²)^s Σ_{j ≤ J} x^j ∫ r^{−j} g_k`.
pub fn poisson_series(basis: &WeightedBasis1D, k: usize, x: f64, terms: usize, normalization: Normalization) -> f64 {
    let sum: f64 = (0..=terms).map(|j| x.powi(j as i32) * basis.moment(k, j)).sum();
    normalization.constant() * (1.0 - x * x).powf(basis.s) * sum
}

pub fn poisson_extend_1d(
    basis: &WeightedBasis1D,
    k: usize,
    normalization: Normalization,
    samples: usize,
) -> Result<ExteriorHarmonic> {
    if k >= basis.len() {
        return Err(Error::InvalidParameter(format!("k = {k} outside the basis of size {}", basis.len())));
    }
    let (x, w) = gauss_legendre_on(samples.max(64), -1.0, 1.0);
    let values = x.iter().map(|&xi| poisson_value(basis, k, xi, normalization)).collect::<Result<Vec<_>>>()?;
    let l2_norm = values.iter().zip(&w).map(|(v, wt)| wt * v * v).sum::<f64>().sqrt();
    let series = (0..=SERIES_TERMS).map(|j| basis.moment(k, j)).collect();
    Ok(ExteriorHarmonic { k, x, values, l2_norm, series, constant: normalization.constant() })
}
