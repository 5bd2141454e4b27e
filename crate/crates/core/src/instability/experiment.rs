//! Minimal-pair search over a discrete family and the ε-sweep.

use super::family::DiscreteFamily;
use super::gamma::{GammaContext, GammaTensor};
use crate::error::{Error, Result};
use crate::fit::{fit_line, LineFit};
use crate::par::{map_range, Exec};

#[derive(Clone, Debug, PartialEq)]
pub struct InstabilityRow {
    pub epsilon: f64,
    pub members: usize,
    pub bumps: usize,
    pub pair: (usize, usize),
    /// Sampled `‖q₁ − q₂‖_∞` of the selected pair.
    pub separation: f64,
    /// `sup_t ‖Γ(q₁) − Γ(q₂)‖_{X′}` for the first window.
    pub gap_x_prime: f64,
    /// `max_χ sup_t ‖Γ_χ(q₁) − Γ_χ(q₂)‖_op / ‖χ‖²_{W^{2,∞}}`.
    pub gap_windowed: f64,
    /// Smallest sampled separation over all pairs.
    pub min_separation: f64,
}

fn sup_norm_distance(family: &DiscreteFamily, i: usize, j: usize) -> f64 {
    family.members[i]
        .values()
        .iter()
        .zip(family.members[j].values())
        .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()))
}

/// Select the pair with the smallest X′ gap under the first window, then
/// evaluate the windowed operator-norm surrogate over every window.
pub fn instability_experiment(
    family: &DiscreteFamily,
    contexts: &[GammaContext],
    exec: Exec,
) -> Result<InstabilityRow> {
    if family.len() < 2 {
        return Err(Error::InvalidParameter("family needs at least two members".into()));
    }
    let first = contexts.first().ok_or_else(|| Error::InvalidParameter("no time windows given".into()))?;
    let tensors = first.gamma_family(&family.members, exec)?;
    let n = tensors.len();
    let best_per_row: Vec<(f64, usize)> = map_range(exec, n, |i| {
        (0..i)
            .map(|j| (tensors[i].difference(&tensors[j]).x_prime_norm(), j))
            .fold((f64::INFINITY, usize::MAX), |a, b| if b.0 < a.0 { b } else { a })
    });
    let (gap_x_prime, i, j) = best_per_row
        .iter()
        .enumerate()
        .skip(1)
        .map(|(i, (g, j))| (*g, i, *j))
        .fold((f64::INFINITY, 0, 0), |a, b| if b.0 < a.0 { b } else { a });
    let mut gap_windowed = 0.0f64;
    for ctx in contexts {
        let (a, b): (GammaTensor, GammaTensor) = if std::ptr::eq(ctx, first) {
            (tensors[i].clone(), tensors[j].clone())
        } else {
            (ctx.gamma_tensor(&family.members[i], exec)?, ctx.gamma_tensor(&family.members[j], exec)?)
        };
        let norm = ctx.window.norm_w2inf;
        gap_windowed = gap_windowed.max(a.difference(&b).sup_operator_norm() / (norm * norm));
    }
    let min_separation = (0..n)
        .flat_map(|a| (0..a).map(move |b| (a, b)))
        .map(|(a, b)| sup_norm_distance(family, a, b))
        .fold(f64::INFINITY, f64::min);
    Ok(InstabilityRow {
        epsilon: family.epsilon,
        members: n,
        bumps: family.bumps(),
        pair: (j, i),
        separation: sup_norm_distance(family, i, j),
        gap_x_prime,
        gap_windowed,
        min_separation,
    })
}

#[derive(Clone, Debug)]
pub struct InstabilityReport {
    pub rows: Vec<InstabilityRow>,
    /// Minimal-pair gaps strictly decrease as ε decreases.
    pub monotone: bool,
    /// Fit of `log(gap)` against `ε^{−1/(3α)}`.
    pub fit: Option<LineFit>,
}

/// Runs the experiment per family; `families` should be ordered by decreasing ε.
pub fn instability_sweep(families: &[DiscreteFamily], contexts: &[GammaContext], exec: Exec) -> Result<InstabilityReport> {
    let rows = families.iter().map(|f| instability_experiment(f, contexts, exec)).collect::<Result<Vec<_>>>()?;
    let monotone = rows.windows(2).all(|w| w[1].epsilon < w[0].epsilon && w[1].gap_x_prime < w[0].gap_x_prime);
    let usable: Vec<(f64, f64)> = families
        .iter()
        .zip(&rows)
        .filter(|(_, r)| r.gap_x_prime > 0.0)
        .map(|(f, r)| (f.epsilon.powf(-1.0 / (3.0 * f.alpha)), r.gap_x_prime.ln()))
        .collect();
    let fit = if usable.len() >= 2 {
        let (x, y): (Vec<f64>, Vec<f64>) = usable.into_iter().unzip();
        Some(fit_line(&x, &y)?)
    } else {
        None
    };
    Ok(InstabilityReport { rows, monotone, fit })
}

impl InstabilityReport {
    pub fn summary(&self) -> String {
        let mut out = String::from("epsilon,members,bumps,pair_a,pair_b,separation,gap_x_prime,gap_windowed\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{:.6e},{:.6e},{:.6e}\n",
                r.epsilon, r.members, r.bumps, r.pair.0, r.pair.1, r.separation, r.gap_x_prime, r.gap_windowed
            ));
        }
        out.push_str(&format!("# monotone={}\n", self.monotone));
        if let Some(f) = &self.fit {
            out.push_str(&format!("# slope={:.6e} intercept={:.6e} rms={:.3e}\n", f.slope, f.intercept, f.rms));
        }
        out
    }
}
