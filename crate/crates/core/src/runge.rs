//! Poisson operator `P_q - Id`, its singular system, regularized Runge
//! approximation, pairing reconstruction and the stability sweep.

use crate::dn::{assemble_dn_matrix, basis_column_track, dn_gap_norm, flatten, star_pairing, DnMatrix, InputBasis};
use crate::error::{Error, Result};
use crate::fit::fit_line;
use crate::forward::{solve_backward, GalerkinSystem, Mode, Potential, SpaceTimeField};
use crate::fractional::{symmetric_function, FracLapOperator};
use crate::grid::{DomainPartition, TimeGrid};
use crate::par::{self, Exec};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

/// Interior space-time samples, `|Ω| × samples`.
pub type InteriorField = DMatrix<f64>;

/// `h·w_m` for every row of a time-major interior vector.
fn output_weights(part: &DomainPartition, tg: &TimeGrid) -> Vec<f64> {
    let n = part.idx_omega.len();
    let h = part.spacing();
    tg.weights().iter().flat_map(|w| std::iter::repeat(w * h).take(n)).collect()
}

fn unflatten(v: &DVector<f64>, n: usize, samples: usize) -> InteriorField {
    DMatrix::from_fn(n, samples, |a, m| v[m * n + a])
}

/// `L²(Ω_T)` inner product with trapezoid time weights.
pub fn interior_inner(tg: &TimeGrid, h: f64, a: &InteriorField, b: &InteriorField) -> f64 {
    let w = tg.weights();
    (0..tg.samples()).map(|m| w[m] * h * a.column(m).dot(&b.column(m))).sum()
}

/// Matrix of `P_q - Id`: basis coefficients to `v = u - f` on `Ω × time`, time-major rows.
#[derive(Clone, Debug)]
pub struct PoissonMatrix {
    pub matrix: DMatrix<f64>,
    pub input_gram: DMatrix<f64>,
    pub weights: Vec<f64>,
    pub q_hash: u64,
    pub basis: InputBasis,
    pub part: DomainPartition,
    pub tg: TimeGrid,
    /// Smallest singular value of the weighted matrix (injectivity probe).
    pub sigma_min: f64,
}

pub fn assemble_poisson(sys: &GalerkinSystem, tg: &TimeGrid, basis: &InputBasis) -> Result<PoissonMatrix> {
    assemble_poisson_with(sys, tg, basis, Exec::default_policy())
}

pub fn assemble_poisson_with(sys: &GalerkinSystem, tg: &TimeGrid, basis: &InputBasis, exec: Exec) -> Result<PoissonMatrix> {
    basis.check(&sys.part, tg)?;
    let cols = par::map_range(exec, basis.len(), |j| flatten(&(&sys.modes * basis_column_track(sys, tg, basis, j).disp)));
    let rows = sys.part.idx_omega.len() * tg.samples();
    let matrix = DMatrix::from_fn(rows, basis.len(), |r, j| cols[j][r]);
    let mut p = PoissonMatrix {
        matrix,
        input_gram: basis.sobolev_gram(sys, tg),
        weights: output_weights(&sys.part, tg),
        q_hash: sys.q.content_hash(),
        basis: basis.clone(),
        part: sys.part.clone(),
        tg: tg.clone(),
        sigma_min: 0.0,
    };
    let k = p.weighted()?;
    p.sigma_min = thin_svd(&k, false)?.1.min();
    if p.sigma_min <= 0.0 {
        eprintln!("warning: Poisson matrix is numerically singular (sigma_min = {})", p.sigma_min);
    }
    Ok(p)
}

impl PoissonMatrix {
    pub fn interior_len(&self) -> usize {
        self.part.idx_omega.len()
    }
    pub fn apply(&self, coeffs: &DVector<f64>) -> InteriorField {
        unflatten(&(&self.matrix * coeffs), self.interior_len(), self.tg.samples())
    }
    /// Time-major flattening of an interior field.
    pub fn flatten(&self, f: &InteriorField) -> DVector<f64> {
        DVector::from_vec(flatten(f))
    }
    pub fn unflatten(&self, v: &DVector<f64>) -> InteriorField {
        unflatten(v, self.interior_len(), self.tg.samples())
    }
    pub fn inner(&self, a: &InteriorField, b: &InteriorField) -> f64 {
        interior_inner(&self.tg, self.part.spacing(), a, b)
    }
    pub fn norm(&self, a: &InteriorField) -> f64 {
        self.inner(a, a).max(0.0).sqrt()
    }
    /// Norm of a coefficient vector in the input space.
    pub fn input_norm(&self, c: &DVector<f64>) -> f64 {
        c.dot(&(&self.input_gram * c)).max(0.0).sqrt()
    }
    /// `G^{-1/2}` for the input Gram.
    pub fn gram_inv_sqrt(&self) -> Result<DMatrix<f64>> {
        inv_sqrt_spd(&self.input_gram)
    }
    /// `W^{1/2} P G^{-1/2}`.
    pub fn weighted(&self) -> Result<DMatrix<f64>> {
        let mut k = &self.matrix * self.gram_inv_sqrt()?;
        for (r, w) in self.weights.iter().enumerate() {
            k.row_mut(r).scale_mut(w.sqrt());
        }
        Ok(k)
    }
}

/// Inverse square root of a symmetric positive definite matrix.
pub(crate) fn inv_sqrt_spd(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (values, _) = crate::fractional::eigen_sorted(m.clone());
    let (lo, hi) = (values[0], values[values.len() - 1]);
    if !(lo > hi * 1e-15) {
        return Err(Error::Conditioning(lo / hi));
    }
    Ok(symmetric_function(m, |x| 1.0 / x.sqrt()))
}

/// Coefficient-space sides of the adjoint identity for one interior source `F`:
/// `⟨(P - Id) b_j, F⟩_{Ω_T}` and `-⟨b_j, (-Δ)^s v_F⟩_{(Ω_e)_T}` for every basis element.
pub fn adjoint_sides(sys: &GalerkinSystem, p: &PoissonMatrix, f: &InteriorField) -> Result<(DVector<f64>, DVector<f64>)> {
    let tg = &p.tg;
    let flat = p.flatten(f);
    let weighted = DVector::from_iterator(flat.len(), flat.iter().zip(&p.weights).map(|(a, w)| a * w));
    let lhs = p.matrix.transpose() * weighted;
    let mut source = SpaceTimeField::zeros(sys.part.grid.len(), tg.samples());
    for (a, &i) in sys.part.idx_omega.iter().enumerate() {
        for m in 0..tg.samples() {
            source.values[(i, m)] = f[(a, m)];
        }
    }
    let vf = solve_backward(sys, tg, &source, Mode::Spectral)?;
    let omega = &sys.part.idx_omega;
    let nodes_op = sys.op.block(&p.basis.nodes, omega);
    let trace = nodes_op * vf.restrict(omega);
    let w = tg.weights();
    let h = sys.spacing();
    let rhs = DVector::from_fn(p.basis.len(), |j, _| {
        let (a, b) = p.basis.split(j);
        -(0..tg.samples()).map(|m| w[m] * h * p.basis.temporal[b][m] * trace[(a, m)]).sum::<f64>()
    });
    Ok((lhs, rhs))
}

/// Worst relative adjoint residual over `trials` random interior sources.
pub fn adjoint_identity_check(sys: &GalerkinSystem, p: &PoissonMatrix, trials: usize, seed: u64) -> Result<f64> {
    if trials == 0 {
        return Err(Error::InvalidParameter("need at least one trial".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..trials {
        let f = DMatrix::from_fn(p.interior_len(), p.tg.samples(), |_, _| rng.gen_range(-1.0..1.0));
        let (lhs, rhs) = adjoint_sides(sys, p, &f)?;
        worst = worst.max((&lhs - &rhs).norm() / rhs.norm().max(1e-300));
    }
    Ok(worst)
}

/// Weighted singular system of `P_q - Id`: `(P - Id) φ_j = σ_j w_j`.
#[derive(Clone, Debug)]
pub struct SvdSystem {
    /// Descending.
    pub sigma: Vec<f64>,
    /// Input coefficient vectors, orthonormal in the input Gram.
    pub phi: DMatrix<f64>,
    /// Output vectors (time-major rows), orthonormal in `L²(Ω_T)`.
    pub w: DMatrix<f64>,
    pub rank: usize,
}

type ThinSvd = (Option<DMatrix<f64>>, DVector<f64>, Option<DMatrix<f64>>);

/// SVD of a tall matrix: QR, then one-sided Jacobi on the R factor.
pub(crate) fn thin_svd(k: &DMatrix<f64>, vectors: bool) -> Result<ThinSvd> {
    const MAX_SWEEPS: usize = 60;
    if k.iter().any(|x| !x.is_finite()) {
        return Err(Error::Conditioning(f64::NAN));
    }
    let qr = k.clone().qr();
    let mut a = qr.r();
    let n = a.ncols();
    let mut v = DMatrix::<f64>::identity(n, n);
    let mut converged = false;
    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let alpha = a.column(p).norm_squared();
                let beta = a.column(q).norm_squared();
                let gamma = a.column(p).dot(&a.column(q));
                if gamma == 0.0 || gamma.abs() <= f64::EPSILON * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let t = if zeta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for m in [&mut a, &mut v] {
                    for i in 0..m.nrows() {
                        let (x, y) = (m[(i, p)], m[(i, q)]);
                        m[(i, p)] = c * x - s * y;
                        m[(i, q)] = s * x + c * y;
                    }
                }
            }
        }
        if !rotated {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::IterationLimit { iterations: MAX_SWEEPS, estimate: f64::NAN });
    }
    let values = DVector::from_fn(n, |j, _| a.column(j).norm());
    if !vectors {
        return Ok((None, values, None));
    }
    let ur = DMatrix::from_fn(n, n, |i, j| if values[j] > 0.0 { a[(i, j)] / values[j] } else { 0.0 });
    Ok((Some(qr.q() * ur), values, Some(v.transpose())))
}

/// Singular values below `RANK_TOL · σ₁` are treated as zero.
pub const RANK_TOL: f64 = 1e-14;

pub fn svd_system(p: &PoissonMatrix) -> Result<SvdSystem> {
    let k = p.weighted()?;
    let (u, values, vt) = thin_svd(&k, true)?;
    let (u, vt) = (u.expect("requested"), vt.expect("requested"));
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]));
    let top = values[order[0]];
    let kept: Vec<usize> = order.into_iter().filter(|&j| values[j] > RANK_TOL * top).collect();
    let g = p.gram_inv_sqrt()?;
    let sigma: Vec<f64> = kept.iter().map(|&j| values[j]).collect();
    let v = DMatrix::from_fn(vt.ncols(), kept.len(), |i, c| vt[(kept[c], i)]);
    let phi = g * v;
    let w = DMatrix::from_fn(u.nrows(), kept.len(), |r, c| u[(r, kept[c])] / p.weights[r].sqrt());
    Ok(SvdSystem { rank: sigma.len(), sigma, phi, w })
}

impl SvdSystem {
    /// `⟨φ, w_j⟩` for every singular vector.
    pub fn coefficients(&self, p: &PoissonMatrix, target: &InteriorField) -> DVector<f64> {
        let flat = p.flatten(target);
        let weighted = DVector::from_iterator(flat.len(), flat.iter().zip(&p.weights).map(|(a, w)| a * w));
        self.w.transpose() * weighted
    }
    /// `‖φ - Σ_j ⟨φ, w_j⟩ w_j‖²`, the part of the target outside the finite range.
    pub fn complement_sq(&self, p: &PoissonMatrix, target: &InteriorField, c: &DVector<f64>) -> f64 {
        let resid = p.flatten(target) - &self.w * c;
        resid.iter().zip(&p.weights).map(|(r, w)| w * r * r).sum::<f64>().max(0.0)
    }
    fn retained(&self, alpha: f64) -> usize {
        self.sigma.iter().take_while(|&&s| s > alpha).count()
    }
}

#[derive(Clone, Debug)]
pub struct RungeApproximation {
    pub coeffs: DVector<f64>,
    /// `‖(P - Id) f_α - φ‖`, evaluated directly.
    pub achieved_error: f64,
    /// The same error from the spectral identity, including the complement term.
    pub predicted_error: f64,
    pub input_norm: f64,
    pub retained: usize,
    /// `(P - Id) f_α - φ`.
    pub residual: InteriorField,
}

fn check_target(p: &PoissonMatrix, target: &InteriorField) -> Result<()> {
    if target.shape() != (p.interior_len(), p.tg.samples()) {
        return Err(Error::Support("target shape does not match Ω × time".into()));
    }
    if target.column(0).amax() > 1e-12 * target.amax() {
        return Err(Error::IncompatibleData("target must vanish at t = 0".into()));
    }
    Ok(())
}

/// `R_α φ = Σ_{σ_j > α} σ_j^{-1} ⟨φ, w_j⟩ φ_j`.
pub fn runge_approximate(
    sys: &SvdSystem,
    p: &PoissonMatrix,
    target: &InteriorField,
    alpha: f64,
) -> Result<RungeApproximation> {
    if !(alpha > 0.0) {
        return Err(Error::InvalidParameter(format!("cutoff must be positive, got {alpha}")));
    }
    check_target(p, target)?;
    let c = sys.coefficients(p, target);
    let r = sys.retained(alpha);
    let mut coeffs = DVector::zeros(p.basis.len());
    for j in 0..r {
        coeffs += sys.phi.column(j) * (c[j] / sys.sigma[j]);
    }
    let residual = p.apply(&coeffs) - target;
    let achieved_error = p.norm(&residual);
    let tail: f64 = (r..sys.rank).map(|j| c[j] * c[j]).sum();
    let predicted_error = (tail + sys.complement_sq(p, target, &c)).sqrt();
    let input_norm = p.input_norm(&coeffs);
    let bound = p.norm(target) / alpha;
    if input_norm > bound * (1.0 + 1e-10) {
        return Err(Error::Conditioning(input_norm / bound));
    }
    Ok(RungeApproximation { coeffs, achieved_error, predicted_error, input_norm, retained: r, residual })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TradeoffRow {
    pub alpha: f64,
    pub error: f64,
    pub input_norm: f64,
    pub retained: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TradeoffTable {
    pub rows: Vec<TradeoffRow>,
    pub error_nonincreasing: bool,
    pub norm_nondecreasing: bool,
}

/// Errors and input norms over a decreasing cutoff grid, from nested partial sums.
pub fn runge_tradeoff_sweep(
    sys: &SvdSystem,
    p: &PoissonMatrix,
    target: &InteriorField,
    alphas: &[f64],
) -> Result<TradeoffTable> {
    if alphas.iter().any(|a| !(*a > 0.0)) || alphas.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::InvalidParameter("cutoff grid must be positive and decreasing".into()));
    }
    check_target(p, target)?;
    let c = sys.coefficients(p, target);
    let comp = sys.complement_sq(p, target, &c);
    // tail[k] = Σ_{j >= k} c_j², head[k] = Σ_{j < k} (c_j/σ_j)²
    let mut tail = vec![0.0; sys.rank + 1];
    for j in (0..sys.rank).rev() {
        tail[j] = tail[j + 1] + c[j] * c[j];
    }
    let mut head = vec![0.0; sys.rank + 1];
    for j in 0..sys.rank {
        head[j + 1] = head[j] + (c[j] / sys.sigma[j]).powi(2);
    }
    let rows: Vec<TradeoffRow> = alphas
        .iter()
        .map(|&alpha| {
            let r = sys.retained(alpha);
            TradeoffRow { alpha, error: (comp + tail[r]).sqrt(), input_norm: head[r].sqrt(), retained: r }
        })
        .collect();
    let error_nonincreasing = rows.windows(2).all(|w| w[1].error <= w[0].error);
    let norm_nondecreasing = rows.windows(2).all(|w| w[1].input_norm >= w[0].input_norm);
    Ok(TradeoffTable { rows, error_nonincreasing, norm_nondecreasing })
}

/// Residual of projecting each target onto the first `m` columns of `P_q - Id`, for each `m` in `sizes`.
/// Rows of the result follow `targets`.
pub fn density_probe(p: &PoissonMatrix, targets: &[InteriorField], sizes: &[usize]) -> Result<Vec<Vec<f64>>> {
    let m_max = sizes.iter().copied().max().unwrap_or(0);
    if m_max > p.basis.len() || sizes.contains(&0) {
        return Err(Error::InvalidParameter(format!("basis sizes must lie in 1..={}", p.basis.len())));
    }
    let rows = p.matrix.nrows();
    targets
        .iter()
        .map(|t| {
            if t.shape() != (p.interior_len(), p.tg.samples()) {
                return Err(Error::Support("target shape does not match Ω × time".into()));
            }
            let flat = p.flatten(t);
            let aug = DMatrix::from_fn(rows, m_max + 1, |r, j| {
                let v = if j < m_max { p.matrix[(r, j)] } else { flat[r] };
                v * p.weights[r].sqrt()
            });
            let rr = aug.qr().r();
            let last = rr.column(m_max);
            let mut suffix = vec![0.0; m_max + 2];
            for i in (0..=m_max).rev() {
                suffix[i] = suffix[i + 1] + last[i] * last[i];
            }
            Ok(sizes.iter().map(|&m| suffix[m].sqrt()).collect())
        })
        .collect()
}

/// Surrogate norm of `H₀²(0,T; H̃^{s+γ}(Ω))` on interior fields.
#[derive(Clone, Debug)]
pub struct TestNorm {
    pub s: f64,
    pub gamma: f64,
    spatial: DMatrix<f64>,
    tg: TimeGrid,
    h: f64,
}

impl TestNorm {
    pub fn new(op: &FracLapOperator, part: &DomainPartition, tg: &TimeGrid, gamma: f64) -> Result<Self> {
        if !(gamma > 0.0) {
            return Err(Error::InvalidParameter(format!("γ must be positive, got {gamma}")));
        }
        let s = op.s();
        let a = op.block(&part.idx_omega, &part.idx_omega);
        let n = a.nrows();
        let id = DMatrix::<f64>::identity(n, n);
        let spatial = symmetric_function(&(id + a), |x| x.powf((s + gamma) / (2.0 * s)));
        Ok(TestNorm { s, gamma, spatial, tg: tg.clone(), h: part.spacing() })
    }
    /// `γ = s/2`.
    pub fn default_for(op: &FracLapOperator, part: &DomainPartition, tg: &TimeGrid) -> Result<Self> {
        Self::new(op, part, tg, op.s() / 2.0)
    }
    pub fn norm(&self, f: &InteriorField) -> f64 {
        let g = &self.spatial * f;
        let dt = self.tg.dt();
        let s = g.ncols();
        // zero extension before t = 0, one-sided at t = T
        let at = |m: isize| -> DVector<f64> {
            if m < 0 {
                DVector::zeros(g.nrows())
            } else {
                g.column(m as usize).into_owned()
            }
        };
        let w = self.tg.weights();
        let mut total = 0.0;
        for m in 0..s {
            let mi = m as isize;
            let (d1, d2) = if m + 1 < s {
                ((at(mi + 1) - at(mi - 1)) / (2.0 * dt), (at(mi + 1) - at(mi) * 2.0 + at(mi - 1)) / (dt * dt))
            } else {
                ((at(mi) - at(mi - 1)) / dt, (at(mi) - at(mi - 1) * 2.0 + at(mi - 2)) / (dt * dt))
            };
            total += w[m] * self.h * (at(mi).norm_squared() + d1.norm_squared() + d2.norm_squared());
        }
        total.sqrt()
    }
    pub fn normalize(&self, f: &InteriorField) -> InteriorField {
        f / self.norm(f)
    }
}

/// `sin(kπ(x+1)/2)`-type spatial modes on Ω times `sin²(πt/T) cos(lπt/T)`, normalized.
pub fn default_dictionary(part: &DomainPartition, tg: &TimeGrid, norm: &TestNorm, k_max: usize, l_max: usize) -> Vec<InteriorField> {
    let (a, b) = (part.omega.a, part.omega.b);
    let t_end = tg.horizon();
    let mut out = Vec::new();
    for k in 1..=k_max {
        for l in 0..l_max {
            let f = DMatrix::from_fn(part.idx_omega.len(), tg.samples(), |i, m| {
                let x = part.grid.node(part.idx_omega[i]);
                let z = std::f64::consts::PI * tg.time(m) / t_end;
                (k as f64 * std::f64::consts::PI * (x - a) / (b - a)).sin() * z.sin().powi(2) * (l as f64 * z).cos()
            });
            out.push(norm.normalize(&f));
        }
    }
    out
}

/// `Σ_m w_m h Σ_x q(x) φ1(x, t_m) φ2(x, T - t_m)`.
pub fn weighted_pairing(tg: &TimeGrid, h: f64, q: &[f64], phi1: &InteriorField, phi2: &InteriorField) -> f64 {
    let w = tg.weights();
    let s = tg.samples();
    (0..s)
        .map(|m| w[m] * h * q.iter().enumerate().map(|(a, qa)| qa * phi1[(a, m)] * phi2[(a, s - 1 - m)]).sum::<f64>())
        .sum()
}

/// Max over dictionary pairs of `|∫ q_diff φ1 φ2*|`; a lower bound for the weak norm.
pub fn z_norm_surrogate(tg: &TimeGrid, h: f64, q_diff: &[f64], dictionary: &[InteriorField]) -> f64 {
    let mut best = 0.0f64;
    for a in dictionary {
        for b in dictionary {
            best = best.max(weighted_pairing(tg, h, q_diff, a, b).abs());
        }
    }
    best
}

/// Operator, Poisson matrix and singular system for one potential.
#[derive(Clone, Debug)]
pub struct RungeContext {
    pub q: Potential,
    pub poisson: PoissonMatrix,
    pub svd: SvdSystem,
}

impl RungeContext {
    pub fn new(sys: &GalerkinSystem, tg: &TimeGrid, basis: &InputBasis) -> Result<Self> {
        let poisson = assemble_poisson(sys, tg, basis)?;
        let svd = svd_system(&poisson)?;
        Ok(RungeContext { q: sys.q.clone(), poisson, svd })
    }
}

/// Normalized free solutions `(P_q - Id) b_j` for two basis elements; a pair of
/// test functions every nearby potential can approximate well.
pub fn free_solution_pair(ctx: &RungeContext, norm: &TestNorm, j1: usize, j2: usize) -> (InteriorField, InteriorField) {
    let unit = |j: usize| {
        let mut e = DVector::zeros(ctx.poisson.basis.len());
        e[j] = 1.0;
        norm.normalize(&ctx.poisson.apply(&e))
    };
    (unit(j1), unit(j2))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PairingEstimate {
    /// `⟨(Λ_{q1} - Λ_{q2}) f1, f2*⟩`, computable from data alone.
    pub estimate: f64,
    /// `∫ (q1 - q2)(φ2* t1 + φ1 t2* + t1 t2*)`, available when both potentials are known.
    pub remainder: f64,
    /// `‖q1 - q2‖∞ (‖φ2‖‖t1‖ + ‖φ1‖‖t2‖ + ‖t1‖‖t2‖)`.
    pub budget: f64,
    pub runge_error: [f64; 2],
    pub input_norm: [f64; 2],
}

/// Estimate `∫ (q1 - q2) φ1 φ2*` from DN data and Runge approximations at cutoff `alpha`.
pub fn reconstruct_pairings(
    m1: &DnMatrix,
    m2: &DnMatrix,
    c1: &RungeContext,
    c2: &RungeContext,
    phi1: &InteriorField,
    phi2: &InteriorField,
    alpha: f64,
) -> Result<PairingEstimate> {
    if m1.basis_hash != m2.basis_hash || m1.basis.nodes != m1.part.idx_w2 {
        return Err(Error::InvalidParameter("pairing needs a shared basis on W1 = W2".into()));
    }
    let r1 = runge_approximate(&c1.svd, &c1.poisson, phi1, alpha)?;
    let r2 = runge_approximate(&c2.svd, &c2.poisson, phi2, alpha)?;
    let tg = &m1.tg;
    let h = m1.part.spacing();
    let diff = m1.apply(r1.coeffs.as_slice()) - m2.apply(r1.coeffs.as_slice());
    let basis = &m1.basis;
    let f2 = DMatrix::from_fn(basis.nodes.len(), tg.samples(), |a, m| {
        (0..basis.temporal.len()).map(|b| r2.coeffs[a * basis.temporal.len() + b] * basis.temporal[b][m]).sum()
    });
    let estimate = star_pairing(tg, h, &diff, &f2);
    let dq = c1.q.minus(&c2.q);
    let (t1, t2) = (&r1.residual, &r2.residual);
    let remainder = weighted_pairing(tg, h, &dq, t1, phi2)
        + weighted_pairing(tg, h, &dq, phi1, t2)
        + weighted_pairing(tg, h, &dq, t1, t2);
    let qmax = dq.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let n = |f: &InteriorField| interior_inner(tg, h, f, f).sqrt();
    let budget = qmax * (n(phi2) * r1.achieved_error + n(phi1) * r2.achieved_error + r1.achieved_error * r2.achieved_error);
    Ok(PairingEstimate {
        estimate,
        remainder,
        budget,
        runge_error: [r1.achieved_error, r2.achieved_error],
        input_norm: [r1.input_norm, r2.input_norm],
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct StabilityRow {
    pub family_param: f64,
    /// DN gap, clamped below at [`DELTA_FLOOR`].
    pub delta: f64,
    pub error: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct StabilityFit {
    pub c_log: f64,
    pub sigma: f64,
    pub c_pow: f64,
    pub a: f64,
    pub resid_log: f64,
    pub resid_pow: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StabilityRecord {
    pub rows: Vec<StabilityRow>,
    /// Rows sorted by parameter have δ and e both increasing.
    pub monotone: bool,
    pub fit: StabilityFit,
}

pub const DELTA_FLOOR: f64 = 1e-12;

/// Fits `e ≈ C |log δ|^{-σ}` and `e ≈ C δ^a` in log coordinates; rows with `e = 0` or `δ` at the floor are skipped.
pub fn fit_stability(rows: &[StabilityRow]) -> Result<StabilityFit> {
    let usable: Vec<&StabilityRow> = rows.iter().filter(|r| r.error > 0.0 && r.delta > DELTA_FLOOR).collect();
    if usable.len() < 4 {
        return Err(Error::Fit(format!("need at least 4 usable rows, got {}", usable.len())));
    }
    if usable.iter().any(|r| r.delta >= 1.0) {
        return Err(Error::Fit("the log model needs δ < 1".into()));
    }
    let ly: Vec<f64> = usable.iter().map(|r| r.error.ln()).collect();
    let xl: Vec<f64> = usable.iter().map(|r| (-r.delta.ln()).ln()).collect();
    let xp: Vec<f64> = usable.iter().map(|r| r.delta.ln()).collect();
    let fl = fit_line(&xl, &ly)?;
    let fp = fit_line(&xp, &ly)?;
    Ok(StabilityFit {
        c_log: fl.intercept.exp(),
        sigma: -fl.slope,
        c_pow: fp.intercept.exp(),
        a: fp.slope,
        resid_log: fl.rms,
        resid_pow: fp.rms,
    })
}

/// Inputs shared by every member of a stability family.
pub struct StabilitySetup<'a> {
    pub op: &'a FracLapOperator,
    pub part: &'a DomainPartition,
    pub tg: &'a TimeGrid,
    pub basis: &'a InputBasis,
    pub dictionary: &'a [InteriorField],
}

/// Uniform i.i.d. perturbation of the second DN matrix.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoiseModel {
    pub eta: f64,
    pub seed: u64,
}

/// Pairs `(q1, q1 + c·shape)` for each `c` in `params`; δ from the DN gap, e from the weak-norm surrogate.
pub fn stability_sweep(
    setup: &StabilitySetup,
    q1: &Potential,
    shape: &Potential,
    params: &[f64],
    noise: Option<NoiseModel>,
    exec: Exec,
) -> Result<StabilityRecord> {
    let StabilitySetup { op, part, tg, basis, dictionary } = *setup;
    let base = assemble_dn_matrix(&GalerkinSystem::new(op, part, q1)?, tg, basis)?;
    let rows = par::try_map_range(exec, params.len(), |i| -> Result<StabilityRow> {
        let c = params[i];
        let values: Vec<f64> = q1.values().iter().zip(shape.values()).map(|(a, b)| a + c * b).collect();
        let bound = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let q2 = Potential::new(part, values, bound, q1.regularity())?;
        let mut m2 = assemble_dn_matrix(&GalerkinSystem::new(op, part, &q2)?, tg, basis)?;
        if let Some(nm) = noise {
            let mut rng = ChaCha8Rng::seed_from_u64(nm.seed.wrapping_add(i as u64));
            m2.matrix.apply(|x| *x += rng.gen_range(-nm.eta..=nm.eta));
        }
        let delta = dn_gap_norm(&base, &m2)?.max(DELTA_FLOOR);
        let error = z_norm_surrogate(tg, part.spacing(), &q1.minus(&q2), dictionary);
        Ok(StabilityRow { family_param: c, delta, error })
    })?;
    let mut sorted = rows.clone();
    sorted.sort_by(|a, b| a.family_param.total_cmp(&b.family_param));
    let monotone = sorted.windows(2).all(|w| w[1].delta > w[0].delta && w[1].error > w[0].error);
    let fit = fit_stability(&rows)?;
    Ok(StabilityRecord { rows, monotone, fit })
}
