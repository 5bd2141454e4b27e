//! Exterior Dirichlet-to-Neumann map and its matrix realization.

use crate::error::{Error, Result};
use crate::forward::{
    exact_cross_integral, hash_f64s, propagate_spectral, solve_forward_modal, ExteriorSignal, ForwardInputs,
    GalerkinSystem, ModalTrack, SpaceTimeField,
};
use crate::grid::{DomainPartition, TimeGrid};
use crate::par::{self, Exec};
use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use std::io::{Read, Write};

/// Tensor-product exterior inputs: a unit nodal value times a temporal profile.
#[derive(Clone, Debug, PartialEq)]
pub struct InputBasis {
    /// Grid indices of the spatial nodes (inside W1).
    pub nodes: Vec<usize>,
    /// Temporal profiles sampled on the time grid.
    pub temporal: Vec<Vec<f64>>,
    pub description: String,
}

impl InputBasis {
    /// `n_t` sine-squared windows `sin²(πt/T) cos(jπt/T)`, `j = 0..n_t`, on every W1 node.
    pub fn default_for(part: &DomainPartition, tg: &TimeGrid, n_t: usize) -> Self {
        let t_end = tg.horizon();
        let temporal = (0..n_t)
            .map(|j| {
                tg.times()
                    .iter()
                    .map(|&t| {
                        let z = std::f64::consts::PI * t / t_end;
                        z.sin().powi(2) * (j as f64 * z).cos()
                    })
                    .collect()
            })
            .collect();
        InputBasis {
            nodes: part.idx_w1.clone(),
            temporal,
            description: format!("hat x sin^2-window, {} nodes x {} modes", part.idx_w1.len(), n_t),
        }
    }
    /// Geometric family of sine-squared onset ramps `sin²(πt/(2τ_j))`, held at 1 after `τ_j = τ_0 r^j`.
    pub fn ramps(part: &DomainPartition, tg: &TimeGrid, n_t: usize, tau0: f64, ratio: f64) -> Result<Self> {
        if !(tau0 > 0.0 && ratio > 0.0 && ratio < 1.0) || tau0 * ratio.powi(n_t as i32 - 1) < tg.dt() {
            return Err(Error::InvalidParameter("ramp widths must stay above the time step".into()));
        }
        let temporal = (0..n_t)
            .map(|j| {
                let tau = tau0 * ratio.powi(j as i32);
                tg.times()
                    .iter()
                    .map(|&t| if t < tau { (std::f64::consts::PI * t / (2.0 * tau)).sin().powi(2) } else { 1.0 })
                    .collect()
            })
            .collect();
        Ok(InputBasis {
            nodes: part.idx_w1.clone(),
            temporal,
            description: format!("hat x sin^2-ramp, {} nodes x {} widths from {tau0} by {ratio}", part.idx_w1.len(), n_t),
        })
    }
    pub fn len(&self) -> usize {
        self.nodes.len() * self.temporal.len()
    }
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
    /// Column `j` is node `j / n_t` times profile `j % n_t`.
    pub fn split(&self, j: usize) -> (usize, usize) {
        (j / self.temporal.len(), j % self.temporal.len())
    }
    pub fn element(&self, part: &DomainPartition, tg: &TimeGrid, j: usize) -> Result<ExteriorSignal> {
        let (a, b) = self.split(j);
        let field = SpaceTimeField::separable(part.grid.len(), &[self.nodes[a]], &[1.0], &self.temporal[b]);
        ExteriorSignal::new(part, tg, field)
    }
    /// Exterior signal `Σ_j c_j b_j`.
    pub fn combine(&self, part: &DomainPartition, tg: &TimeGrid, coeffs: &[f64]) -> Result<ExteriorSignal> {
        let mut field = SpaceTimeField::zeros(part.grid.len(), tg.samples());
        for (j, c) in coeffs.iter().enumerate() {
            let (a, b) = self.split(j);
            let i = self.nodes[a];
            for m in 0..tg.samples() {
                field.values[(i, m)] += c * self.temporal[b][m];
            }
        }
        ExteriorSignal::new(part, tg, field)
    }
    pub fn content_hash(&self) -> u64 {
        let mut flat: Vec<f64> = self.nodes.iter().map(|&i| i as f64).collect();
        for t in &self.temporal {
            flat.extend_from_slice(t);
        }
        hash_f64s(&flat)
    }
    pub(crate) fn check(&self, part: &DomainPartition, tg: &TimeGrid) -> Result<()> {
        if self.nodes.iter().any(|i| !part.idx_w1.contains(i)) {
            return Err(Error::Support("input basis nodes must lie in W1".into()));
        }
        for t in &self.temporal {
            if t.len() != tg.samples() {
                return Err(Error::Support("temporal profile has the wrong length".into()));
            }
            if t[0] != 0.0 {
                return Err(Error::IncompatibleData("temporal profile must start at zero".into()));
            }
        }
        Ok(())
    }
    /// Time Gram `Σ_m w_m τ_a(t_m) τ_b(t_m)`.
    pub fn time_gram(&self, tg: &TimeGrid) -> DMatrix<f64> {
        let w = tg.weights();
        let n = self.temporal.len();
        DMatrix::from_fn(n, n, |a, b| (0..tg.samples()).map(|m| w[m] * self.temporal[a][m] * self.temporal[b][m]).sum())
    }
    /// Gram matrix of the discrete `L²(0,T; H^{2s})` norm, `(I + A_{W1W1})²` in space.
    pub fn sobolev_gram(&self, sys: &GalerkinSystem, tg: &TimeGrid) -> DMatrix<f64> {
        let a = sys.op.block(&self.nodes, &self.nodes);
        let id = DMatrix::<f64>::identity(self.nodes.len(), self.nodes.len());
        let sp = (&id + &a) * (&id + &a) * sys.spacing();
        kron(&sp, &self.time_gram(tg))
    }
}

/// Kronecker product `a ⊗ b` (node-major, matching [`InputBasis::split`]).
pub(crate) fn kron(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let (p, q) = (b.nrows(), b.ncols());
    DMatrix::from_fn(a.nrows() * p, a.ncols() * q, |i, j| a[(i / p, j / q)] * b[(i % p, j % q)])
}

/// `[(-Δ)^s u]` on the nodes `idx` at every sample, `|idx| × samples`.
pub fn trace_on(sys: &GalerkinSystem, field: &SpaceTimeField, idx: &[usize]) -> DMatrix<f64> {
    let rows = DMatrix::from_fn(idx.len(), sys.part.grid.len(), |a, j| sys.op.matrix()[(idx[a], j)]);
    rows * &field.values
}

/// `Λ_q f` on W2.
pub fn apply_dn(sys: &GalerkinSystem, tg: &TimeGrid, f: &ExteriorSignal) -> Result<DMatrix<f64>> {
    let sol = solve_forward_modal(sys, tg, &ForwardInputs { exterior: Some(f), ..Default::default() })?;
    Ok(trace_on(sys, &sol.field, &sys.part.idx_w2))
}

/// The part of `Λ_q f` on W2 that passes through Ω, `A_{W2,Ω} u|_Ω`; `Λ_q f` minus this is `A_{W2,ext} f`.
pub fn interior_response(sys: &GalerkinSystem, tg: &TimeGrid, f: &ExteriorSignal) -> Result<DMatrix<f64>> {
    let sol = solve_forward_modal(sys, tg, &ForwardInputs { exterior: Some(f), ..Default::default() })?;
    let omega = &sys.part.idx_omega;
    Ok(sys.op.block(&sys.part.idx_w2, omega) * sol.field.restrict(omega))
}

/// Discrete DN map over an input basis. Row `m · |W2| + i` is node `idx_w2[i]` at `t_m`.
#[derive(Clone, Debug)]
pub struct DnMatrix {
    pub matrix: DMatrix<f64>,
    pub q_hash: u64,
    pub basis_hash: u64,
    pub basis: InputBasis,
    pub part: DomainPartition,
    pub tg: TimeGrid,
    /// Input Gram of the `L²(0,T; H^{2s})` surrogate.
    pub input_gram: DMatrix<f64>,
    /// `(I + A_{W2W2})^{-1}`, the per-frame square root of the `H^{-2s}` weight.
    pub output_half: DMatrix<f64>,
}

/// Modal solve for basis element `j`.
pub(crate) fn basis_column_track(sys: &GalerkinSystem, tg: &TimeGrid, basis: &InputBasis, j: usize) -> ModalTrack {
    let (a, b) = basis.split(j);
    let ext_pos = sys.part.exterior_position()[basis.nodes[a]].expect("basis node is exterior");
    let profile = &basis.temporal[b];
    let g = sys.modes.transpose() * sys.coupling.column(ext_pos) * -1.0;
    let forcing = DMatrix::from_fn(g.len(), tg.samples(), |k, m| g[k] * profile[m]);
    let zero = DVector::zeros(g.len());
    propagate_spectral(sys, tg, &forcing, &zero, &zero)
}

/// Trace of basis element `j` on `out_idx`, `|out_idx| × samples`.
fn basis_column_trace(
    sys: &GalerkinSystem,
    tg: &TimeGrid,
    basis: &InputBasis,
    j: usize,
    out_idx: &[usize],
    trace_modes: &DMatrix<f64>,
) -> DMatrix<f64> {
    let (a, b) = basis.split(j);
    let node = basis.nodes[a];
    let profile = &basis.temporal[b];
    let track = basis_column_track(sys, tg, basis, j);
    let mut trace = trace_modes * &track.disp;
    for (r, &i) in out_idx.iter().enumerate() {
        let a_in = sys.op.matrix()[(i, node)];
        for m in 0..tg.samples() {
            trace[(r, m)] += a_in * profile[m];
        }
    }
    trace
}

/// Flatten a `|W2| × samples` trace time-major.
pub(crate) fn flatten(trace: &DMatrix<f64>) -> Vec<f64> {
    let mut out = Vec::with_capacity(trace.len());
    for m in 0..trace.ncols() {
        for i in 0..trace.nrows() {
            out.push(trace[(i, m)]);
        }
    }
    out
}

pub fn assemble_dn_matrix(sys: &GalerkinSystem, tg: &TimeGrid, basis: &InputBasis) -> Result<DnMatrix> {
    assemble_dn_matrix_with(sys, tg, basis, Exec::default_policy())
}

pub fn assemble_dn_matrix_with(sys: &GalerkinSystem, tg: &TimeGrid, basis: &InputBasis, exec: Exec) -> Result<DnMatrix> {
    basis.check(&sys.part, tg)?;
    let out_idx = &sys.part.idx_w2;
    let trace_modes = sys.op.block(out_idx, &sys.part.idx_omega) * &sys.modes;
    let cols = par::map_range(exec, basis.len(), |j| {
        flatten(&basis_column_trace(sys, tg, basis, j, out_idx, &trace_modes))
    });
    let rows = out_idx.len() * tg.samples();
    let matrix = DMatrix::from_fn(rows, basis.len(), |r, j| cols[j][r]);
    let a_out = sys.op.block(out_idx, out_idx);
    let id = DMatrix::<f64>::identity(out_idx.len(), out_idx.len());
    let output_half = (&id + a_out).try_inverse().ok_or_else(|| Error::InvalidParameter("I + A_WW is singular".into()))?;
    Ok(DnMatrix {
        matrix,
        q_hash: sys.q.content_hash(),
        basis_hash: basis.content_hash(),
        basis: basis.clone(),
        part: sys.part.clone(),
        tg: tg.clone(),
        input_gram: basis.sobolev_gram(sys, tg),
        output_half,
    })
}

impl DnMatrix {
    /// Trace for the input `Σ_j c_j b_j`, as `|W2| × samples`.
    pub fn apply(&self, coeffs: &[f64]) -> DMatrix<f64> {
        let flat = &self.matrix * DVector::from_column_slice(coeffs);
        let n = self.part.idx_w2.len();
        DMatrix::from_fn(n, self.tg.samples(), |i, m| flat[m * n + i])
    }
    /// Serialize in the DNMAT1 layout.
    pub fn write_dnmat1<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(b"DNMAT1")?;
        w.write_all(&self.q_hash.to_le_bytes())?;
        w.write_all(&self.basis_hash.to_le_bytes())?;
        w.write_all(&(self.matrix.nrows() as u64).to_le_bytes())?;
        w.write_all(&(self.matrix.ncols() as u64).to_le_bytes())?;
        for i in 0..self.matrix.nrows() {
            for j in 0..self.matrix.ncols() {
                w.write_all(&self.matrix[(i, j)].to_le_bytes())?;
            }
        }
        Ok(())
    }
}

/// Contents of a DNMAT1 payload.
#[derive(Clone, Debug, PartialEq)]
pub struct DnPayload {
    pub q_hash: u64,
    pub basis_hash: u64,
    pub matrix: DMatrix<f64>,
}

pub fn read_dnmat1<R: Read>(mut r: R) -> Result<DnPayload> {
    use crate::fractional::{read_f64, read_u64};
    let mut magic = [0u8; 6];
    r.read_exact(&mut magic)?;
    if &magic != b"DNMAT1" {
        return Err(Error::Format("bad DNMAT1 magic".into()));
    }
    let q_hash = read_u64(&mut r)?;
    let basis_hash = read_u64(&mut r)?;
    let rows = read_u64(&mut r)? as usize;
    let cols = read_u64(&mut r)? as usize;
    let mut data = vec![0.0; rows * cols];
    for v in data.iter_mut() {
        *v = read_f64(&mut r)?;
    }
    Ok(DnPayload { q_hash, basis_hash, matrix: DMatrix::from_row_slice(rows, cols, &data) })
}

const FLOOR: f64 = 1e-14;

/// `Σ_m w_m h ⟨a(t_m), b(T - t_m)⟩` over matching rows.
pub(crate) fn star_pairing(tg: &TimeGrid, h: f64, a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let w = tg.weights();
    let s = tg.samples();
    (0..s).map(|m| w[m] * h * a.column(m).dot(&b.column(s - 1 - m))).sum()
}

fn frobenius_l2(tg: &TimeGrid, h: f64, a: &DMatrix<f64>) -> f64 {
    let w = tg.weights();
    (0..tg.samples()).map(|m| w[m] * h * a.column(m).norm_squared()).sum::<f64>().sqrt()
}

/// Relative defect of `⟨Λ* f1, f2⟩ = ⟨f1, Λ* f2⟩` over the exterior.
pub fn self_adjoint_residual(sys: &GalerkinSystem, tg: &TimeGrid, f1: &ExteriorSignal, f2: &ExteriorSignal) -> Result<f64> {
    let ext = &sys.part.idx_exterior;
    let h = sys.spacing();
    let dn = |f: &ExteriorSignal| -> Result<DMatrix<f64>> {
        let sol = solve_forward_modal(sys, tg, &ForwardInputs { exterior: Some(f), ..Default::default() })?;
        Ok(trace_on(sys, &sol.field, ext))
    };
    let (l1, l2) = (dn(f1)?, dn(f2)?);
    let (e1, e2) = (f1.field().restrict(ext), f2.field().restrict(ext));
    let lhs = star_pairing(tg, h, &l1, &e2);
    let rhs = star_pairing(tg, h, &l2, &e1);
    let scale = (frobenius_l2(tg, h, &l1) * frobenius_l2(tg, h, &e2))
        .max(frobenius_l2(tg, h, &l2) * frobenius_l2(tg, h, &e1))
        .max(FLOOR);
    Ok((lhs - rhs).abs() / scale)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct IdentityReport {
    /// `∫_{Ω_T} (q1 - q2) u1 u2*`, integrated exactly in time.
    pub lhs: f64,
    /// `∫_{(Ω_e)_T} ((Λ_{q1} - Λ_{q2}) f1) f2*`, trapezoid in time.
    pub rhs: f64,
    pub residual: f64,
}

pub fn integral_identity_residual(
    sys1: &GalerkinSystem,
    sys2: &GalerkinSystem,
    tg: &TimeGrid,
    f1: &ExteriorSignal,
    f2: &ExteriorSignal,
) -> Result<IdentityReport> {
    let solve = |sys: &GalerkinSystem, f: &ExteriorSignal| {
        solve_forward_modal(sys, tg, &ForwardInputs { exterior: Some(f), ..Default::default() })
    };
    let u1 = solve(sys1, f1)?;
    let u2 = solve(sys2, f2)?;
    let u1_under_q2 = solve(sys2, f1)?;
    let h = sys1.spacing();
    let weights: Vec<f64> = sys1.q.minus(&sys2.q).iter().map(|d| d * h).collect();
    let lhs = exact_cross_integral(sys1, &u1.track, sys2, &u2.track, tg, &weights);
    // (Λ1 - Λ2) f1 = A_{ext,Ω} (v1 - ṽ1): the exterior data cancels exactly
    let omega = &sys1.part.idx_omega;
    let dv = u1.field.restrict(omega) - u1_under_q2.field.restrict(omega);
    let diff = sys1.coupling.transpose() * dv;
    let rhs = star_pairing(tg, h, &diff, &f2.field().restrict(&sys1.part.idx_exterior));
    let residual = (lhs - rhs).abs() / lhs.abs().max(rhs.abs()).max(FLOOR);
    Ok(IdentityReport { lhs, rhs, residual })
}

/// Largest singular value of `k` by power iteration on `kᵀk`.
pub fn power_sigma_max(k: &DMatrix<f64>, tol: f64, max_iter: usize) -> Result<f64> {
    let n = k.ncols();
    if n == 0 || k.amax() == 0.0 {
        return Ok(0.0);
    }
    let mut x = DVector::from_fn(n, |i, _| 1.0 + 0.5 * ((i as f64) * 0.618).sin());
    x /= x.norm();
    let mut sigma = 0.0;
    for _ in 0..max_iter {
        let y = k * &x;
        let z = k.transpose() * &y;
        let next = y.norm();
        let zn = z.norm();
        if zn == 0.0 {
            return Ok(0.0);
        }
        x = z / zn;
        if (next - sigma).abs() <= tol * next {
            return Ok(next.max(sigma));
        }
        sigma = next;
    }
    Err(Error::IterationLimit { iterations: max_iter, estimate: sigma })
}

/// Weighted difference `W_out^{1/2} (M1 - M2) G_in^{-1/2}`.
pub fn weighted_difference(m1: &DnMatrix, m2: &DnMatrix) -> Result<DMatrix<f64>> {
    if m1.basis_hash != m2.basis_hash || m1.matrix.shape() != m2.matrix.shape() || m1.tg != m2.tg {
        return Err(Error::InvalidParameter("DN matrices do not share a basis and grid".into()));
    }
    let diff = &m1.matrix - &m2.matrix;
    let n_out = m1.part.idx_w2.len();
    let w = m1.tg.weights();
    let h = m1.part.spacing();
    let mut left = DMatrix::zeros(diff.nrows(), diff.ncols());
    for m in 0..m1.tg.samples() {
        let block = diff.rows(m * n_out, n_out);
        let weighted = &m1.output_half * block * (w[m] * h).sqrt();
        left.rows_mut(m * n_out, n_out).copy_from(&weighted);
    }
    let g_inv_half = crate::runge::inv_sqrt_spd(&m1.input_gram)?;
    Ok(left * g_inv_half)
}

/// Surrogate of `‖Λ1 - Λ2‖_*` over the common input basis.
pub fn dn_gap_norm(m1: &DnMatrix, m2: &DnMatrix) -> Result<f64> {
    power_sigma_max(&weighted_difference(m1, m2)?, 1e-8, 500)
}

/// Fraction of a trace's energy in the top third of sine modes in time, per column.
pub fn temporal_high_band_fraction(trace: &DMatrix<f64>) -> f64 {
    let s = trace.ncols();
    let modes = s.saturating_sub(2);
    if modes == 0 {
        return 0.0;
    }
    let cutoff = modes - modes / 3;
    let (mut high, mut total) = (0.0, 0.0);
    for i in 0..trace.nrows() {
        for k in 1..=modes {
            let c: f64 = (1..s - 1)
                .map(|m| trace[(i, m)] * (std::f64::consts::PI * (k * m) as f64 / (s - 1) as f64).sin())
                .sum();
            let e = c * c;
            total += e;
            if k > cutoff {
                high += e;
            }
        }
    }
    if total == 0.0 {
        0.0
    } else {
        high / total
    }
}
