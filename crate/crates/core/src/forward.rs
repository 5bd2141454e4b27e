//! Forward and backward solves of the exterior-value problem.
//!
//! The interior part `v = u - f` satisfies `v'' + L_q v = F̃` with
//! `L_q = A_ΩΩ + diag(q)` and `F̃ = F - [A f]_Ω`. In the eigenbasis of `L_q`
//! each mode is an oscillator. The spectral integrator treats the trapezoid
//! rule on the forcing as impulses `w_m F̃_m δ(t - t_m)` and propagates them
//! exactly, so the semidiscrete identities downstream hold to roundoff.

use crate::error::{Error, Result};
use crate::fractional::FracLapOperator;
use crate::grid::{DomainPartition, TimeGrid};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::io::Write;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Regularity {
    LInf,
    Holder { alpha: f64, beta: f64 },
}

/// Potential `q` sampled on the Ω nodes.
#[derive(Clone, Debug, PartialEq)]
pub struct Potential {
    values: Vec<f64>,
    bound: f64,
    regularity: Regularity,
}

impl Potential {
    pub fn new(part: &DomainPartition, values: Vec<f64>, bound: f64, regularity: Regularity) -> Result<Self> {
        if values.len() != part.idx_omega.len() {
            return Err(Error::Support(format!(
                "potential has {} samples, Ω has {} nodes",
                values.len(),
                part.idx_omega.len()
            )));
        }
        let max = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if !(max <= bound) {
            return Err(Error::InvalidParameter(format!("max|q| = {max} exceeds the bound {bound}")));
        }
        Ok(Potential { values, bound, regularity })
    }
    pub fn zero(part: &DomainPartition) -> Self {
        Potential { values: vec![0.0; part.idx_omega.len()], bound: 0.0, regularity: Regularity::LInf }
    }
    /// Sample `q(x)` on Ω; the bound is the sampled maximum.
    pub fn from_fn(part: &DomainPartition, f: impl Fn(f64) -> f64) -> Self {
        let values: Vec<f64> = part.idx_omega.iter().map(|&i| f(part.grid.node(i))).collect();
        let bound = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        Potential { values, bound, regularity: Regularity::LInf }
    }
    /// `amplitude · bump((x - center) / radius)` with the standard `exp(1 - 1/(1 - r²))` profile.
    pub fn bump(part: &DomainPartition, center: f64, radius: f64, amplitude: f64) -> Self {
        Self::from_fn(part, |x| amplitude * bump_profile((x - center) / radius))
    }
    pub fn values(&self) -> &[f64] {
        &self.values
    }
    pub fn bound(&self) -> f64 {
        self.bound
    }
    pub fn regularity(&self) -> Regularity {
        self.regularity
    }
    pub fn with_regularity(mut self, regularity: Regularity) -> Self {
        self.regularity = regularity;
        self
    }
    pub fn minus(&self, other: &Potential) -> Vec<f64> {
        self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect()
    }
    /// Content hash of the samples.
    pub fn content_hash(&self) -> u64 {
        hash_f64s(&self.values)
    }
}

/// Smooth bump with peak 1 at 0 and support (-1, 1).
pub fn bump_profile(r: f64) -> f64 {
    if r.abs() >= 1.0 {
        0.0
    } else {
        (1.0 - 1.0 / (1.0 - r * r)).exp()
    }
}

pub(crate) fn hash_f64s(values: &[f64]) -> u64 {
    let mut hasher = Sha256::new();
    for v in values {
        hasher.update(v.to_le_bytes());
    }
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
}

/// Grid function on all nodes at every time sample; column `m` is the frame at `t_m`.
#[derive(Clone, Debug, PartialEq)]
pub struct SpaceTimeField {
    pub values: DMatrix<f64>,
    /// Velocity on the Ω nodes (rows follow `idx_omega`), where a solver produced it.
    pub velocity: Option<DMatrix<f64>>,
}

impl SpaceTimeField {
    pub fn zeros(nodes: usize, samples: usize) -> Self {
        SpaceTimeField { values: DMatrix::zeros(nodes, samples), velocity: None }
    }
    /// Separable field `g(x_i) τ(t_m)` on the listed nodes.
    pub fn separable(nodes: usize, idx: &[usize], spatial: &[f64], temporal: &[f64]) -> Self {
        let mut values = DMatrix::zeros(nodes, temporal.len());
        for (m, &tm) in temporal.iter().enumerate() {
            for (a, &i) in idx.iter().enumerate() {
                values[(i, m)] = spatial[a] * tm;
            }
        }
        SpaceTimeField { values, velocity: None }
    }
    pub fn samples(&self) -> usize {
        self.values.ncols()
    }
    pub fn frame(&self, m: usize) -> Vec<f64> {
        self.values.column(m).iter().copied().collect()
    }
    /// Rows `idx` as a `|idx| × samples` matrix.
    pub fn restrict(&self, idx: &[usize]) -> DMatrix<f64> {
        DMatrix::from_fn(idx.len(), self.samples(), |a, m| self.values[(idx[a], m)])
    }
    /// Dump in the FWAV1 layout: `T`, `M`, `N`, then time-major frames.
    pub fn write_fwav1<W: Write>(&self, horizon: f64, mut w: W) -> Result<()> {
        w.write_all(b"FWAV1")?;
        w.write_all(&horizon.to_le_bytes())?;
        w.write_all(&((self.samples() - 1) as u64).to_le_bytes())?;
        w.write_all(&(self.values.nrows() as u64).to_le_bytes())?;
        for v in self.values.iter() {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }
}

/// Time reversal `g*(t) = g(T - t)` on the sample grid.
pub fn star(field: &SpaceTimeField) -> SpaceTimeField {
    SpaceTimeField {
        values: reverse_columns(&field.values),
        velocity: field.velocity.as_ref().map(|v| -reverse_columns(v)),
    }
}

pub fn reverse_columns(m: &DMatrix<f64>) -> DMatrix<f64> {
    let s = m.ncols();
    DMatrix::from_fn(m.nrows(), s, |i, j| m[(i, s - 1 - j)])
}

/// Exterior Dirichlet data: supported off Ω, starting from rest.
#[derive(Clone, Debug, PartialEq)]
pub struct ExteriorSignal(SpaceTimeField);

impl ExteriorSignal {
    pub fn new(part: &DomainPartition, tg: &TimeGrid, field: SpaceTimeField) -> Result<Self> {
        let v = &field.values;
        if v.nrows() != part.grid.len() || v.ncols() != tg.samples() {
            return Err(Error::Support("exterior signal has the wrong shape".into()));
        }
        if part.idx_omega.iter().any(|&i| v.row(i).iter().any(|x| *x != 0.0)) {
            return Err(Error::Support("exterior signal touches Ω".into()));
        }
        let scale = v.amax();
        if scale == 0.0 {
            return Ok(ExteriorSignal(field));
        }
        if v.column(0).amax() > 1e-14 * scale {
            return Err(Error::IncompatibleData("f(·, 0) ≠ 0".into()));
        }
        if v.ncols() >= 3 {
            // second-order one-sided estimate of ∂_t f at t = 0
            // the estimate's own error is O(Δt² f'''), bounded through second differences
            let d0 = (v.column(1) * 4.0 - v.column(2) - v.column(0) * 3.0) / (2.0 * tg.dt());
            let curvature = (1..v.ncols() - 1)
                .map(|m| (v.column(m + 1) - v.column(m) * 2.0 + v.column(m - 1)).amax())
                .fold(0.0, f64::max);
            if d0.amax() > 0.1 * scale / tg.horizon() + 2.0 * curvature / tg.dt() {
                return Err(Error::IncompatibleData("∂_t f(·, 0) ≠ 0".into()));
            }
        }
        Ok(ExteriorSignal(field))
    }
    pub fn zero(part: &DomainPartition, tg: &TimeGrid) -> Self {
        ExteriorSignal(SpaceTimeField::zeros(part.grid.len(), tg.samples()))
    }
    pub fn field(&self) -> &SpaceTimeField {
        &self.0
    }
    pub fn values(&self) -> &DMatrix<f64> {
        &self.0.values
    }
    pub fn star(&self) -> ExteriorSignal {
        ExteriorSignal(star(&self.0))
    }
}

/// Stiffness `L_q`, its eigendecomposition and the exterior coupling block.
#[derive(Clone, Debug)]
pub struct GalerkinSystem {
    pub part: DomainPartition,
    pub q: Potential,
    pub stiffness: DMatrix<f64>,
    /// Ascending eigenvalues `ν_k`.
    pub nu: Vec<f64>,
    /// Euclidean-orthonormal eigenvectors (columns) over `idx_omega`.
    pub modes: DMatrix<f64>,
    /// `A_{Ω, ext}` with columns ordered as `part.idx_exterior`.
    pub coupling: DMatrix<f64>,
    pub op: FracLapOperator,
}

impl GalerkinSystem {
    pub fn new(op: &FracLapOperator, part: &DomainPartition, q: &Potential) -> Result<Self> {
        let defect = op.symmetry_defect();
        if defect > 1e-12 {
            return Err(Error::NonSymmetric(defect));
        }
        let mut stiffness = op.block(&part.idx_omega, &part.idx_omega);
        for (k, v) in q.values().iter().enumerate() {
            stiffness[(k, k)] += v;
        }
        let (nu, modes) = crate::fractional::eigen_sorted(stiffness.clone());
        if nu[0] <= 0.0 {
            return Err(Error::NegativeMode(nu[0]));
        }
        let coupling = op.block(&part.idx_omega, &part.idx_exterior);
        Ok(GalerkinSystem { part: part.clone(), q: q.clone(), stiffness, nu, modes, coupling, op: op.clone() })
    }
    pub fn interior_len(&self) -> usize {
        self.nu.len()
    }
    pub fn spacing(&self) -> f64 {
        self.part.spacing()
    }
    fn omega(&self) -> Vec<f64> {
        self.nu.iter().map(|v| v.sqrt()).collect()
    }
}

/// Interior reduced source `F̃ = F_Ω - [A f]_Ω` as a `K_Ω × samples` matrix.
pub fn lift_exterior(
    sys: &GalerkinSystem,
    f: Option<&ExteriorSignal>,
    source: Option<&SpaceTimeField>,
    samples: usize,
) -> Result<DMatrix<f64>> {
    let part = &sys.part;
    let mut out = match source {
        Some(src) => {
            if part.idx_exterior.iter().any(|&i| src.values.row(i).iter().any(|x| *x != 0.0)) {
                return Err(Error::Support("source must be supported in Ω".into()));
            }
            src.restrict(&part.idx_omega)
        }
        None => DMatrix::zeros(part.idx_omega.len(), samples),
    };
    if let Some(f) = f {
        let fe = f.field().restrict(&part.idx_exterior);
        out -= &sys.coupling * fe;
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Spectral,
    Newmark,
}

/// Forward-problem inputs; absent entries are zero.
#[derive(Clone, Copy, Debug, Default)]
pub struct ForwardInputs<'a> {
    pub exterior: Option<&'a ExteriorSignal>,
    pub source: Option<&'a SpaceTimeField>,
    /// Initial displacement on the Ω nodes.
    pub phi: Option<&'a [f64]>,
    /// Initial velocity on the Ω nodes.
    pub psi: Option<&'a [f64]>,
}

/// Modal history of a spectral solve.
#[derive(Clone, Debug)]
pub struct ModalTrack {
    /// `d_k(t_m)`, `K × samples`.
    pub disp: DMatrix<f64>,
    /// Velocity just after the impulse at `t_m`.
    pub post_velocity: DMatrix<f64>,
    /// Stored velocity (average of the one-sided values at interior samples).
    pub velocity: DMatrix<f64>,
    /// Modal forcing `Eᵀ F̃`.
    pub forcing: DMatrix<f64>,
}

#[derive(Clone, Debug)]
pub struct ForwardSolution {
    pub field: SpaceTimeField,
    pub track: ModalTrack,
}

fn interior_vec(sys: &GalerkinSystem, v: Option<&[f64]>) -> Result<DVector<f64>> {
    let k = sys.interior_len();
    match v {
        None => Ok(DVector::zeros(k)),
        Some(v) if v.len() == k => Ok(DVector::from_column_slice(v)),
        Some(v) => Err(Error::Support(format!("Cauchy data has {} samples, Ω has {k}", v.len()))),
    }
}

/// Modal forcing of a reduced source.
pub(crate) fn modal_forcing(sys: &GalerkinSystem, reduced: &DMatrix<f64>) -> DMatrix<f64> {
    sys.modes.transpose() * reduced
}

/// Exact impulse propagation of `d'' + ν d = Σ w_m g_m δ(t - t_m)`.
pub(crate) fn propagate_spectral(
    sys: &GalerkinSystem,
    tg: &TimeGrid,
    forcing: &DMatrix<f64>,
    d0: &DVector<f64>,
    v0: &DVector<f64>,
) -> ModalTrack {
    let k = sys.interior_len();
    let s = tg.samples();
    let dt = tg.dt();
    let half = 0.5 * dt;
    let omega = sys.omega();
    let c: Vec<f64> = omega.iter().map(|w| (w * dt).cos()).collect();
    let sn: Vec<f64> = omega.iter().map(|w| (w * dt).sin()).collect();
    let mut disp = DMatrix::zeros(k, s);
    let mut post = DMatrix::zeros(k, s);
    let mut vel = DMatrix::zeros(k, s);
    for j in 0..k {
        let (w, cj, sj) = (omega[j], c[j], sn[j]);
        let mut d = d0[j];
        let mut v = v0[j];
        for m in 0..s {
            disp[(j, m)] = d;
            vel[(j, m)] = v;
            let p = v + half * forcing[(j, m)];
            post[(j, m)] = p;
            if m + 1 < s {
                let dn = cj * d + sj / w * p;
                let pre = -w * sj * d + cj * p;
                d = dn;
                v = pre + half * forcing[(j, m + 1)];
            }
        }
    }
    ModalTrack { disp, post_velocity: post, velocity: vel, forcing: forcing.clone() }
}

fn propagate_newmark(
    sys: &GalerkinSystem,
    tg: &TimeGrid,
    forcing: &DMatrix<f64>,
    d0: &DVector<f64>,
    v0: &DVector<f64>,
) -> (DMatrix<f64>, DMatrix<f64>) {
    let k = sys.interior_len();
    let s = tg.samples();
    let dt = tg.dt();
    let mut disp = DMatrix::zeros(k, s);
    let mut vel = DMatrix::zeros(k, s);
    for j in 0..k {
        let nu = sys.nu[j];
        let (mut d, mut v) = (d0[j], v0[j]);
        let mut a = forcing[(j, 0)] - nu * d;
        for m in 0..s {
            disp[(j, m)] = d;
            vel[(j, m)] = v;
            if m + 1 < s {
                let g = forcing[(j, m + 1)];
                let dn = (d + dt * v + 0.25 * dt * dt * (a + g)) / (1.0 + 0.25 * nu * dt * dt);
                let an = g - nu * dn;
                v += 0.5 * dt * (a + an);
                d = dn;
                a = an;
            }
        }
    }
    (disp, vel)
}

fn assemble_field(
    sys: &GalerkinSystem,
    disp: &DMatrix<f64>,
    vel: &DMatrix<f64>,
    exterior: Option<&ExteriorSignal>,
) -> SpaceTimeField {
    let part = &sys.part;
    let interior = &sys.modes * disp;
    let mut values = match exterior {
        Some(f) => f.values().clone(),
        None => DMatrix::zeros(part.grid.len(), disp.ncols()),
    };
    for (a, &i) in part.idx_omega.iter().enumerate() {
        for m in 0..disp.ncols() {
            values[(i, m)] = interior[(a, m)];
        }
    }
    SpaceTimeField { values, velocity: Some(&sys.modes * vel) }
}

/// Spectral-mode solve that also returns the modal history.
pub fn solve_forward_modal(sys: &GalerkinSystem, tg: &TimeGrid, inputs: &ForwardInputs) -> Result<ForwardSolution> {
    let reduced = lift_exterior(sys, inputs.exterior, inputs.source, tg.samples())?;
    let forcing = modal_forcing(sys, &reduced);
    let d0 = sys.modes.transpose() * interior_vec(sys, inputs.phi)?;
    let v0 = sys.modes.transpose() * interior_vec(sys, inputs.psi)?;
    let track = propagate_spectral(sys, tg, &forcing, &d0, &v0);
    let field = assemble_field(sys, &track.disp, &track.velocity, inputs.exterior);
    Ok(ForwardSolution { field, track })
}

pub fn solve_forward(sys: &GalerkinSystem, tg: &TimeGrid, inputs: &ForwardInputs, mode: Mode) -> Result<SpaceTimeField> {
    match mode {
        Mode::Spectral => Ok(solve_forward_modal(sys, tg, inputs)?.field),
        Mode::Newmark => {
            let reduced = lift_exterior(sys, inputs.exterior, inputs.source, tg.samples())?;
            let forcing = modal_forcing(sys, &reduced);
            let d0 = sys.modes.transpose() * interior_vec(sys, inputs.phi)?;
            let v0 = sys.modes.transpose() * interior_vec(sys, inputs.psi)?;
            let (disp, vel) = propagate_newmark(sys, tg, &forcing, &d0, &v0);
            Ok(assemble_field(sys, &disp, &vel, inputs.exterior))
        }
    }
}

/// Terminal-value problem `v'' + L_q v = F`, `v(T) = v'(T) = 0`, by time reflection.
pub fn solve_backward(sys: &GalerkinSystem, tg: &TimeGrid, source: &SpaceTimeField, mode: Mode) -> Result<SpaceTimeField> {
    let reflected = star(source);
    let inputs = ForwardInputs { source: Some(&reflected), ..Default::default() };
    Ok(star(&solve_forward(sys, tg, &inputs, mode)?))
}

/// Largest relative defect of the three-level modal relation
/// `d_{m+1} - 2cos(ωΔt) d_m + d_{m-1} = Δt sin(ωΔt)/ω g_m` over all modes and
/// interior samples; this is the discrete weak form the spectral integrator solves.
pub fn weak_form_residual(sys: &GalerkinSystem, tg: &TimeGrid, track: &ModalTrack) -> f64 {
    let dt = tg.dt();
    let mut worst = 0.0f64;
    for (j, w) in sys.omega().into_iter().enumerate() {
        let (c, sn) = ((w * dt).cos(), (w * dt).sin());
        for m in 1..tg.steps() {
            let (a, b, d) = (track.disp[(j, m + 1)], track.disp[(j, m)], track.disp[(j, m - 1)]);
            let g = dt * sn / w * track.forcing[(j, m)];
            let r = a - 2.0 * c * b + d - g;
            let scale = a.abs() + 2.0 * (c * b).abs() + d.abs() + g.abs();
            if scale > 0.0 {
                worst = worst.max(r.abs() / scale);
            }
        }
    }
    worst
}

/// Energy diagnostics of a forward solution.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EnergyReport {
    /// `max_t (‖v‖_{H̃^s} + ‖v'‖)`.
    pub solution_norm: f64,
    /// `‖F̃‖_{L²(Ω_T)} + ‖φ‖_{H̃^s} + ‖ψ‖`.
    pub data_norm: f64,
    pub ratio: f64,
    /// Relative drift of `‖v'‖² + ⟨L_q v, v⟩` when the forcing vanishes.
    pub drift: Option<f64>,
}

pub fn energy_report(
    sys: &GalerkinSystem,
    tg: &TimeGrid,
    field: &SpaceTimeField,
    inputs: &ForwardInputs,
) -> Result<EnergyReport> {
    let h = sys.spacing();
    let a = sys.op.block(&sys.part.idx_omega, &sys.part.idx_omega);
    let v = field.restrict(&sys.part.idx_omega);
    let vel = field
        .velocity
        .as_ref()
        .ok_or_else(|| Error::InvalidParameter("field carries no velocity track".into()))?;
    let hs = |x: &DVector<f64>| (h * (x.dot(x) + x.dot(&(&a * x)))).max(0.0).sqrt();
    let mut solution_norm = 0.0f64;
    let mut energies = Vec::with_capacity(tg.samples());
    for m in 0..tg.samples() {
        let vm: DVector<f64> = v.column(m).into();
        let wm: DVector<f64> = vel.column(m).into();
        solution_norm = solution_norm.max(hs(&vm) + (h * wm.dot(&wm)).sqrt());
        energies.push(h * (wm.dot(&wm) + vm.dot(&(&sys.stiffness * &vm))));
    }
    let reduced = lift_exterior(sys, inputs.exterior, inputs.source, tg.samples())?;
    let weights = tg.weights();
    let forcing_norm = (h * (0..tg.samples())
        .map(|m| weights[m] * reduced.column(m).norm_squared())
        .sum::<f64>())
    .sqrt();
    let phi = interior_vec(sys, inputs.phi)?;
    let psi = interior_vec(sys, inputs.psi)?;
    let data_norm = forcing_norm + hs(&phi) + (h * psi.dot(&psi)).sqrt();
    let ratio = if data_norm > 0.0 { solution_norm / data_norm } else { 0.0 };
    let drift = if reduced.amax() == 0.0 && energies[0] > 0.0 {
        Some(energies.iter().map(|e| (e - energies[0]).abs()).fold(0.0, f64::max) / energies[0])
    } else {
        None
    };
    Ok(EnergyReport { solution_norm, data_norm, ratio, drift })
}

/// Exterior values of `(-Δ)^s u(·, Δt)` for Cauchy data `φ`, no forcing.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LeakageReport {
    /// `(distance to Ω, |(-Δ)^s u(x, Δt)|)` for each W1 node, by distance.
    pub profile: Vec<(f64, f64)>,
    pub min_magnitude: f64,
    pub monotone: bool,
}

pub fn infinite_speed_demo(sys: &GalerkinSystem, tg: &TimeGrid, phi: &[f64]) -> Result<LeakageReport> {
    let inputs = ForwardInputs { phi: Some(phi), ..Default::default() };
    let u = solve_forward(sys, tg, &inputs, Mode::Spectral)?;
    let au = sys.op.apply(&u.frame(1));
    let part = &sys.part;
    let mut profile: Vec<(f64, f64)> = part
        .idx_w1
        .iter()
        .map(|&i| {
            let x = part.grid.node(i);
            let dist = (part.omega.a - x).max(x - part.omega.b).max(0.0);
            (dist, au[i].abs())
        })
        .collect();
    profile.sort_by(|a, b| a.0.total_cmp(&b.0));
    let min_magnitude = profile.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
    let monotone = profile.windows(2).all(|w| w[1].1 < w[0].1);
    Ok(LeakageReport { profile, min_magnitude, monotone })
}

/// `∫_0^T v1(t)ᵀ D v2(T - t) dt` integrated exactly between samples, with
/// `D = diag(weights)` on the Ω nodes. `track1`, `track2` come from spectral
/// solves on `sys1`, `sys2` over the same time grid.
pub fn exact_cross_integral(
    sys1: &GalerkinSystem,
    track1: &ModalTrack,
    sys2: &GalerkinSystem,
    track2: &ModalTrack,
    tg: &TimeGrid,
    weights: &[f64],
) -> f64 {
    let dt = tg.dt();
    let (w1, w2) = (sys1.omega(), sys2.omega());
    let scaled = DMatrix::from_fn(weights.len(), sys2.interior_len(), |i, l| weights[i] * sys2.modes[(i, l)]);
    let g = sys1.modes.transpose() * scaled;
    let cos_int = |a: f64| {
        let x = a * dt;
        if x == 0.0 {
            dt
        } else {
            dt * x.sin() / x
        }
    };
    let sin_int = |a: f64| {
        let x = a * dt;
        if x == 0.0 {
            0.0
        } else {
            dt * 2.0 * (0.5 * x).sin().powi(2) / x
        }
    };
    let (k1, k2) = (w1.len(), w2.len());
    let mut mcc = DMatrix::zeros(k1, k2);
    let mut mcs = DMatrix::zeros(k1, k2);
    let mut msc = DMatrix::zeros(k1, k2);
    let mut mss = DMatrix::zeros(k1, k2);
    for k in 0..k1 {
        for l in 0..k2 {
            let (cm, cp) = (cos_int(w1[k] - w2[l]), cos_int(w1[k] + w2[l]));
            let (sm, sp) = (sin_int(w1[k] - w2[l]), sin_int(w1[k] + w2[l]));
            let gk = g[(k, l)];
            mcc[(k, l)] = gk * 0.5 * (cm + cp);
            mss[(k, l)] = gk * 0.5 * (cm - cp);
            msc[(k, l)] = gk * 0.5 * (sp + sm);
            mcs[(k, l)] = gk * 0.5 * (sp - sm);
        }
    }
    let (c2, s2): (Vec<f64>, Vec<f64>) = w2.iter().map(|w| ((w * dt).cos(), (w * dt).sin())).unzip();
    let steps = tg.steps();
    let mut total = 0.0;
    for m in 0..steps {
        let mp = steps - 1 - m;
        let r = DVector::from_fn(k1, |k, _| track1.disp[(k, m)]);
        let s = DVector::from_fn(k1, |k, _| track1.post_velocity[(k, m)] / w1[k]);
        let p = DVector::from_fn(k2, |l, _| {
            track2.disp[(l, mp)] * c2[l] + track2.post_velocity[(l, mp)] / w2[l] * s2[l]
        });
        let q = DVector::from_fn(k2, |l, _| {
            track2.disp[(l, mp)] * s2[l] - track2.post_velocity[(l, mp)] / w2[l] * c2[l]
        });
        total += r.dot(&(&mcc * &p)) + r.dot(&(&mcs * &q)) + s.dot(&(&msc * &p)) + s.dot(&(&mss * &q));
    }
    total
}

#[cfg(test)]
mod tests;
