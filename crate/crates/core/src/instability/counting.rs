//! Harmonic-degree counts, X / X′ tensor norms and the δ-net budget.

use crate::error::{Error, Result};
use nalgebra::DMatrix;

fn binomial(top: i64, bottom: i64) -> u128 {
    if top < 0 || bottom < 0 || bottom > top {
        return 0;
    }
    let b = bottom.min(top - bottom) as u128;
    let t = top as u128;
    let mut acc: u128 = 1;
    for i in 0..b {
        acc = acc * (t - i) / (i + 1);
    }
    acc
}

/// `C(m+n−1, n−1) − C(m+n−3, n−1)`, the number of degree-`m` spherical harmonics in `n` dimensions.
pub fn ell_m(n: usize, m: usize) -> Result<u64> {
    if n < 2 {
        return Err(Error::InvalidParameter(format!("ell_m needs n >= 2, got {n}")));
    }
    let (n, m) = (n as i64, m as i64);
    let v = binomial(m + n - 1, n - 1) - binomial(m + n - 3, n - 1);
    let bound = 2u128 * (1 + m as u128).pow((n - 2) as u32);
    assert!(v <= bound, "ell_m({n}, {m}) = {v} exceeds 2(1+m)^(n-2) = {bound}");
    Ok(v as u64)
}

/// Index `(m, k, l)` of a tensor entry; in one dimension `m = l = 0`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct HarmonicIndex {
    pub m: usize,
    pub k: usize,
    pub l: usize,
}

impl HarmonicIndex {
    pub fn level(&self) -> usize {
        self.m + self.k
    }
}

/// All indices with `m + k ≤ sigma_max` and `l < ℓ_m` (`n ≥ 2`), or `k ≤ sigma_max` for `n = 1`.
pub fn harmonic_indices(n: usize, sigma_max: usize) -> Result<Vec<HarmonicIndex>> {
    if n == 0 {
        return Err(Error::InvalidParameter("dimension must be positive".into()));
    }
    let mut out = Vec::new();
    for sigma in 0..=sigma_max {
        if n == 1 {
            out.push(HarmonicIndex { m: 0, k: sigma, l: 0 });
            continue;
        }
        for m in 0..=sigma {
            for l in 0..ell_m(n, m)? as usize {
                out.push(HarmonicIndex { m, k: sigma - m, l });
            }
        }
    }
    Ok(out)
}

/// `sup (1 + max{σ₁, σ₂})^{n+2} |a|`; rows index the output, columns the input.
pub fn x_norm(a: &DMatrix<f64>, index: &[HarmonicIndex], n: usize) -> f64 {
    assert_eq!(a.nrows(), index.len(), "row count must match the index set");
    assert_eq!(a.ncols(), index.len(), "column count must match the index set");
    let mut best = 0.0f64;
    for (r, ir) in index.iter().enumerate() {
        for (c, ic) in index.iter().enumerate() {
            let w = (1.0 + ir.level().max(ic.level()) as f64).powi(n as i32 + 2);
            best = best.max(w * a[(r, c)].abs());
        }
    }
    best
}

/// One-dimensional `sup (1 + max{k₁, k₂})³ |a_{k₁}^{k₂}|`.
pub fn x_prime_norm(a: &DMatrix<f64>) -> f64 {
    let mut best = 0.0f64;
    for r in 0..a.nrows() {
        for c in 0..a.ncols() {
            best = best.max((1.0 + r.max(c) as f64).powi(3) * a[(r, c)].abs());
        }
    }
    best
}

/// Largest singular value, from the eigenvalues of `AᵀA`.
pub fn operator_norm(a: &DMatrix<f64>) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    let ata = a.transpose() * a;
    ata.symmetric_eigenvalues().iter().fold(0.0f64, |m, v| m.max(*v)).sqrt()
}

/// Inputs of the δ-net budget. `c_prime_big ≥ 1` and `c_prime_small > 0` are the
/// decay constants of the Γ bound.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NetInputs {
    pub n: usize,
    pub s: f64,
    pub delta: f64,
    pub r: f64,
    pub t: f64,
    pub chi_norm: f64,
    pub c_prime_big: f64,
    pub c_prime_small: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NetBudget {
    pub inputs: NetInputs,
    pub sigma_tilde: f64,
    pub sigma_star: u64,
    pub delta_prime: f64,
    /// `|Y′| = 1 + 2⌊C′‖χ‖²(1+σ*)^{−(n+2)}/δ′⌋`.
    pub y_prime: f64,
    /// Exact tuple counts `N_σ` for `σ = 0..=σ*`.
    pub n_sigma: Vec<u64>,
    /// `N* = Σ N_σ`.
    pub n_star: u64,
    /// `Σ 8(1+σ)^{2n−1}`, the bound used in the counting argument.
    pub n_star_bound: f64,
    /// `N* log|Y′|`.
    pub log_y: f64,
    pub log_y_bound: f64,
    /// Relative residual of the defining equation at `σ̃`.
    pub residual: f64,
}

fn defining_log(inp: &NetInputs, sigma: f64) -> f64 {
    (inp.n as f64 + 2.0) * (1.0 + sigma).ln() - inp.c_prime_small * sigma
}

/// Number of indices at level exactly `σ'`.
fn level_count(n: usize, level: usize) -> Result<u128> {
    if n == 1 {
        return Ok(1);
    }
    let mut total = 0u128;
    for m in 0..=level {
        total += ell_m(n, m)? as u128;
    }
    Ok(total)
}

/// `N_σ`: index pairs with `max(σ₁, σ₂) = σ`.
pub fn tuple_count(n: usize, sigma: usize) -> Result<u64> {
    let mut below = 0u128;
    for lv in 0..sigma {
        below += level_count(n, lv)?;
    }
    let upto = below + level_count(n, sigma)?;
    Ok((upto * upto - below * below) as u64)
}

pub fn delta_net_budget(inp: NetInputs) -> Result<NetBudget> {
    if inp.n == 0 {
        return Err(Error::InvalidParameter("dimension must be positive".into()));
    }
    let chi2 = inp.chi_norm * inp.chi_norm;
    if !(inp.delta > 0.0 && inp.delta < chi2) {
        return Err(Error::InvalidParameter(format!("delta = {} must lie in (0, ‖χ‖² = {chi2})", inp.delta)));
    }
    if !(inp.c_prime_big >= 1.0 && inp.c_prime_small > 0.0) {
        return Err(Error::InvalidParameter("need C′ >= 1 and c′ > 0".into()));
    }
    let target = (inp.delta / (inp.c_prime_big * chi2)).ln();
    let g = |s: f64| defining_log(&inp, s) - target;
    // g > 0 up to the peak of (1+σ)^{n+2}e^{−c′σ}, then decreases to −∞
    let mut lo = ((inp.n as f64 + 2.0) / inp.c_prime_small - 1.0).max(0.0);
    let mut hi = lo.max(1.0);
    while g(hi) > 0.0 {
        hi *= 2.0;
    }
    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        if g(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-12 * hi.max(1.0) {
            break;
        }
    }
    let sigma_tilde = 0.5 * (lo + hi);
    let residual = g(sigma_tilde).abs() / target.abs().max(1.0);
    let sigma_star = sigma_tilde.floor() as u64;
    let scale = (1.0 + sigma_star as f64).powi(inp.n as i32 + 2);
    let delta_prime = inp.delta / scale;
    let y_prime = 1.0 + 2.0 * (inp.c_prime_big * chi2 / scale / delta_prime).floor();
    let n_sigma = (0..=sigma_star as usize).map(|s| tuple_count(inp.n, s)).collect::<Result<Vec<_>>>()?;
    let n_star: u64 = n_sigma.iter().sum();
    let n_star_bound: f64 =
        (0..=sigma_star).map(|s| 8.0 * (1.0 + s as f64).powi(2 * inp.n as i32 - 1)).sum();
    Ok(NetBudget {
        inputs: inp,
        sigma_tilde,
        sigma_star,
        delta_prime,
        y_prime,
        n_sigma,
        n_star,
        n_star_bound,
        log_y: n_star as f64 * y_prime.ln(),
        log_y_bound: n_star_bound * y_prime.ln(),
        residual,
    })
}

impl NetBudget {
    /// Step inequalities of the counting argument, each as `(name, holds)`.
    pub fn chain(&self) -> Vec<(&'static str, bool)> {
        let inp = &self.inputs;
        let n = inp.n as i32;
        let chi2 = inp.chi_norm * inp.chi_norm;
        let ratio = inp.delta / (inp.c_prime_big * chi2);
        let next = self.sigma_star as f64 + 1.0;
        let tail = (1.0 + next).powi(n + 2) * (-inp.c_prime_small * next).exp();
        let grid_step = (1.0 + self.sigma_star as f64).powi(n + 2) * self.delta_prime;
        vec![
            ("sigma_star_floor", self.sigma_star as f64 <= self.sigma_tilde && self.sigma_tilde < next),
            ("tail_below_ratio", tail <= ratio * (1.0 + 1e-12)),
            ("grid_step_equals_delta", (grid_step - inp.delta).abs() <= 1e-12 * inp.delta),
            ("y_prime_bound", self.y_prime <= 1.0 + 2.0 * inp.c_prime_big * chi2 / inp.delta),
            (
                "n_sigma_bound",
                self.n_sigma
                    .iter()
                    .enumerate()
                    .all(|(s, &c)| c as f64 <= 8.0 * (1.0 + s as f64).powi(2 * n - 1)),
            ),
            ("n_star_bound", self.n_star as f64 <= 8.0 * (1.0 + self.sigma_star as f64).powi(2 * n)),
        ]
    }
}
