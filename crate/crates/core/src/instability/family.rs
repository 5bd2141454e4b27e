//! ε-discrete families of packed bump potentials.

use crate::error::{Error, Result};
use crate::forward::{bump_profile, Potential, Regularity};
use crate::grid::DomainPartition;

const MAX_BUMPS: usize = 16;
/// Safety factor on the packing constant over the exact Lipschitz bound.
const PACKING_SLACK: f64 = 1.05;

/// `sup |φ′|` of the bump profile, by dense sampling.
pub fn profile_lipschitz() -> f64 {
    let n = 200_000;
    let mut best = 0.0f64;
    let h = 2.0 / n as f64;
    for i in 0..n {
        let a = -1.0 + i as f64 * h;
        best = best.max((bump_profile(a + h) - bump_profile(a)).abs() / h);
    }
    best
}

/// Packing constant `c` in `w = (cε/β)^{1/α}`; large enough that every member
/// has Hölder seminorm at most `β`.
pub fn packing_constant(alpha: f64) -> f64 {
    PACKING_SLACK * (2.0 * profile_lipschitz()).powf(alpha)
}

#[derive(Clone, Debug)]
pub struct DiscreteFamily {
    pub epsilon: f64,
    pub beta: f64,
    pub alpha: f64,
    pub r0: f64,
    pub packing: f64,
    pub width: f64,
    pub centers: Vec<f64>,
    /// Amplitude pattern of each member: bit `i` set means bump `i` has height `ε`.
    pub patterns: Vec<u32>,
    pub members: Vec<Potential>,
    /// `2^{−(n+1)}(μβ/ε)^{n/α}` with `n = 1` and the declared `μ`.
    pub packing_lower_bound: f64,
    pub mu: f64,
}

impl DiscreteFamily {
    pub fn bumps(&self) -> usize {
        self.centers.len()
    }
    pub fn len(&self) -> usize {
        self.members.len()
    }
    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
    /// Continuous member `q_i(x)`.
    pub fn eval(&self, i: usize, x: f64) -> f64 {
        let p = self.patterns[i];
        let half = 0.5 * self.width;
        self.centers
            .iter()
            .enumerate()
            .filter(|(b, _)| p >> b & 1 == 1)
            .map(|(_, c)| self.epsilon * bump_profile((x - c) / half))
            .sum()
    }
    /// Finite-difference Hölder quotient `max |q(x+d) − q(x)| / d^α` over the given scales.
    pub fn holder_quotient(&self, i: usize, scales: &[f64]) -> f64 {
        let lo = -self.r0 - self.width;
        let hi = self.r0 + self.width;
        let samples = 20_000;
        let mut best = 0.0f64;
        for &d in scales {
            for j in 0..=samples {
                let x = lo + (hi - lo) * j as f64 / samples as f64;
                best = best.max((self.eval(i, x + d) - self.eval(i, x)).abs() / d.powf(self.alpha));
            }
        }
        best
    }
    /// Brute-force `min_{i≠j} ‖q_i − q_j‖_∞` over the sampled members.
    pub fn min_pairwise_separation(&self) -> f64 {
        let mut best = f64::INFINITY;
        for i in 0..self.len() {
            for j in 0..i {
                let d = self.members[i]
                    .values()
                    .iter()
                    .zip(self.members[j].values())
                    .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
                best = best.min(d);
            }
        }
        best
    }
}

/// Declared `μ(α)` for the packing in `B_{r₀}`: `ε < μβ` guarantees one bump.
pub fn declared_mu(alpha: f64, r0: f64) -> f64 {
    (2.0 * r0).powf(alpha) / packing_constant(alpha)
}

/// Bumps of width `w = (cε/β)^{1/α}` packed in `(−r₀, r₀)`, every `{0, ε}` pattern a member.
///
/// Bump centers sit on grid nodes, so every member attains `ε` at a node of
/// each raised bump and pairwise sampled separation is exactly `ε`.
pub fn mandache_family(
    epsilon: f64,
    beta: f64,
    alpha: f64,
    r0: f64,
    part: &DomainPartition,
) -> Result<DiscreteFamily> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::InvalidParameter(format!("Hölder exponent {alpha} must lie in (0, 1]")));
    }
    if !(r0 > 0.0 && -r0 > part.omega.a && r0 < part.omega.b) {
        return Err(Error::InvalidParameter(format!("B_r0 with r0 = {r0} must lie inside Ω")));
    }
    let mu = declared_mu(alpha, r0);
    if !(epsilon > 0.0 && epsilon < mu * beta) {
        return Err(Error::InvalidParameter(format!("need 0 < ε < μβ = {}", mu * beta)));
    }
    let packing = packing_constant(alpha);
    let h = part.spacing();
    let raw = (packing * epsilon / beta).powf(1.0 / alpha);
    if raw < 4.0 * h {
        return Err(Error::Resolution { width: raw, spacing: h });
    }
    // widen to a whole number of cells so every center is a node
    let cells = (raw / h).ceil();
    let width = cells * h;
    let m = ((2.0 * r0) / width).floor() as usize;
    if m == 0 {
        return Err(Error::InvalidParameter(format!("bump width {width} exceeds the diameter of B_r0")));
    }
    if m > MAX_BUMPS {
        return Err(Error::InvalidParameter(format!("{m} bumps exceed the enumeration cap {MAX_BUMPS}")));
    }
    let start = ((-0.5 * (m as f64 - 1.0) * width) / h).round() * h;
    let centers: Vec<f64> = (0..m).map(|i| start + i as f64 * width).collect();
    if centers.iter().any(|c| c - 0.5 * width < -r0 - 1e-12 || c + 0.5 * width > r0 + 1e-12) {
        return Err(Error::InvalidParameter("bump layout leaves B_r0".into()));
    }
    let patterns: Vec<u32> = (0..1u32 << m).collect();
    let half = 0.5 * width;
    let members = patterns
        .iter()
        .map(|&p| {
            let values: Vec<f64> = part
                .idx_omega
                .iter()
                .map(|&i| {
                    let x = part.grid.node(i);
                    centers
                        .iter()
                        .enumerate()
                        .filter(|(b, _)| p >> b & 1 == 1)
                        .map(|(_, c)| epsilon * bump_profile((x - c) / half))
                        .sum()
                })
                .collect();
            Potential::new(part, values, epsilon, Regularity::Holder { alpha, beta })
        })
        .collect::<Result<Vec<_>>>()?;
    let packing_lower_bound = 0.25 * (mu * beta / epsilon).powf(1.0 / alpha);
    Ok(DiscreteFamily {
        epsilon,
        beta,
        alpha,
        r0,
        packing,
        width,
        centers,
        patterns,
        members,
        packing_lower_bound,
        mu,
    })
}
