//! χ-windowed special solutions and the Γ tensor.

use super::basis::WeightedBasis1D;
use crate::error::{Error, Result};
use crate::forward::{
    hash_f64s, propagate_spectral, solve_forward, ExteriorSignal, ForwardInputs, GalerkinSystem, Mode, Potential,
    SpaceTimeField,
};
use crate::fractional::FracLapOperator;
use crate::grid::{DomainPartition, TimeGrid, TimeWindow};
use crate::par::{map_range, try_map_range, Exec};
use nalgebra::{DMatrix, DVector};
use std::io::{Read, Write};

/// `Y_k` sampled on the W1 nodes inside `(2, 3]`.
pub fn pasted_basis(part: &DomainPartition, basis: &WeightedBasis1D, k: usize) -> Vec<f64> {
    part.idx_w1.iter().map(|&i| basis.eval(k, part.grid.node(i))).collect()
}

fn check_gauge(q: &Potential) -> Result<()> {
    let v = q.values();
    if v.iter().any(|x| *x < 0.0) {
        return Err(Error::InvalidParameter("potential must be nonnegative".into()));
    }
    let max = v.iter().fold(0.0f64, |m, x| m.max(*x));
    if max > q.bound() {
        return Err(Error::InvalidParameter(format!("max q = {max} exceeds the bound {}", q.bound())));
    }
    Ok(())
}

fn check_window(tg: &TimeGrid, window: &TimeWindow) -> Result<()> {
    if window.values.len() != tg.samples() {
        return Err(Error::InvalidParameter(format!(
            "window has {} samples, time grid has {}",
            window.values.len(),
            tg.samples()
        )));
    }
    Ok(())
}

#[derive(Clone, Debug)]
pub struct WindowedSolution {
    pub field: SpaceTimeField,
    /// `max_m ‖u(t_m)‖_{L²(B₁)}`.
    pub sup_l2: f64,
}

/// Solve with exterior data `χ(t) Y` on the W1 nodes; `spatial` overrides the pasted `Y_k`.
pub fn windowed_solution_with(
    sys: &GalerkinSystem,
    tg: &TimeGrid,
    window: &TimeWindow,
    spatial: &[f64],
) -> Result<WindowedSolution> {
    check_gauge(&sys.q)?;
    check_window(tg, window)?;
    let part = &sys.part;
    if spatial.len() != part.idx_w1.len() {
        return Err(Error::Support(format!("{} spatial samples for {} W1 nodes", spatial.len(), part.idx_w1.len())));
    }
    let field = SpaceTimeField::separable(part.grid.len(), &part.idx_w1, spatial, &window.values);
    let f = ExteriorSignal::new(part, tg, field)?;
    let field = solve_forward(sys, tg, &ForwardInputs { exterior: Some(&f), ..Default::default() }, Mode::Spectral)?;
    let h = part.spacing();
    let sup_l2 = (0..tg.samples())
        .map(|m| part.idx_omega.iter().map(|&i| field.values[(i, m)].powi(2)).sum::<f64>() * h)
        .fold(0.0f64, f64::max)
        .sqrt();
    Ok(WindowedSolution { field, sup_l2 })
}

pub fn windowed_solution(
    sys: &GalerkinSystem,
    tg: &TimeGrid,
    window: &TimeWindow,
    k: usize,
    basis: &WeightedBasis1D,
) -> Result<WindowedSolution> {
    windowed_solution_with(sys, tg, window, &pasted_basis(&sys.part, basis, k))
}

/// `Γ_{k1}^{k2}(t_m)` stored as `entries[(k1 * K + k2) * M + m]`.
#[derive(Clone, Debug, PartialEq)]
pub struct GammaTensor {
    pub k: usize,
    pub samples: usize,
    pub entries: Vec<f64>,
    pub window_hash: u64,
    pub window_norm: f64,
    pub q_hash: u64,
}

impl GammaTensor {
    pub fn zeros(k: usize, samples: usize) -> Self {
        GammaTensor { k, samples, entries: vec![0.0; k * k * samples], window_hash: 0, window_norm: 0.0, q_hash: 0 }
    }
    pub fn get(&self, k1: usize, k2: usize, m: usize) -> f64 {
        self.entries[(k1 * self.k + k2) * self.samples + m]
    }
    fn set(&mut self, k1: usize, k2: usize, m: usize, v: f64) {
        self.entries[(k1 * self.k + k2) * self.samples + m] = v;
    }
    /// The `K × K` slice at sample `m`, rows indexed by `k2`.
    pub fn frame(&self, m: usize) -> DMatrix<f64> {
        DMatrix::from_fn(self.k, self.k, |k2, k1| self.get(k1, k2, m))
    }
    pub fn sup_abs(&self, k1: usize, k2: usize) -> f64 {
        (0..self.samples).map(|m| self.get(k1, k2, m).abs()).fold(0.0, f64::max)
    }
    pub fn max_abs(&self) -> f64 {
        self.entries.iter().fold(0.0f64, |a, v| a.max(v.abs()))
    }
    /// `max |Γ_{k1}^{k2} − Γ_{k2}^{k1}| / max |Γ|`.
    pub fn symmetry_residual(&self) -> f64 {
        let scale = self.max_abs();
        if scale == 0.0 {
            return 0.0;
        }
        let mut worst = 0.0f64;
        for k1 in 0..self.k {
            for k2 in 0..k1 {
                for m in 0..self.samples {
                    worst = worst.max((self.get(k1, k2, m) - self.get(k2, k1, m)).abs());
                }
            }
        }
        worst / scale
    }
    pub fn difference(&self, other: &GammaTensor) -> GammaTensor {
        assert_eq!((self.k, self.samples), (other.k, other.samples), "tensor shapes differ");
        let entries = self.entries.iter().zip(&other.entries).map(|(a, b)| a - b).collect();
        GammaTensor { entries, q_hash: 0, ..self.clone() }
    }
    /// `sup_t ‖Γ(t)‖_{X′}`.
    pub fn x_prime_norm(&self) -> f64 {
        (0..self.samples).map(|m| super::counting::x_prime_norm(&self.frame(m))).fold(0.0, f64::max)
    }
    /// `sup_t ‖Γ(t)‖_{op}` of the truncated matrix.
    pub fn sup_operator_norm(&self) -> f64 {
        (0..self.samples).map(|m| super::counting::operator_norm(&self.frame(m))).fold(0.0, f64::max)
    }
    /// Envelope `max_{max(k1,k2) = σ} sup_t |Γ_{k1}^{k2}|` for `σ = 0..K`.
    pub fn envelope(&self) -> Vec<f64> {
        let mut env = vec![0.0f64; self.k];
        for k1 in 0..self.k {
            for k2 in 0..self.k {
                let s = k1.max(k2);
                env[s] = env[s].max(self.sup_abs(k1, k2));
            }
        }
        env
    }

    pub fn write_gamma1<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(b"GAMMA1")?;
        for d in [self.k, self.k, self.samples] {
            w.write_all(&(d as u64).to_le_bytes())?;
        }
        for v in &self.entries {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_gamma1<R: Read>(mut r: R) -> Result<Self> {
        use crate::fractional::{read_f64, read_u64};
        let mut magic = [0u8; 6];
        r.read_exact(&mut magic)?;
        if &magic != b"GAMMA1" {
            return Err(Error::Format("bad GAMMA1 magic".into()));
        }
        let k1 = read_u64(&mut r)? as usize;
        let k2 = read_u64(&mut r)? as usize;
        let m = read_u64(&mut r)? as usize;
        if k1 != k2 {
            return Err(Error::Format(format!("GAMMA1 dims {k1} x {k2} are not square")));
        }
        let mut t = GammaTensor::zeros(k1, m);
        for v in t.entries.iter_mut() {
            *v = read_f64(&mut r)?;
        }
        Ok(t)
    }
}

/// Response `r_j(t_m)` of every mode to the scalar forcing `χ(t)`.
fn unit_responses(sys: &GalerkinSystem, tg: &TimeGrid, window: &TimeWindow) -> DMatrix<f64> {
    let n = sys.interior_len();
    let forcing = DMatrix::from_fn(n, tg.samples(), |_, m| window.values[m]);
    let zero = DVector::zeros(n);
    propagate_spectral(sys, tg, &forcing, &zero, &zero).disp
}

/// Modal factors of one system: `left[(k2, j)] = h (Y_{k2}ᵀ A_{WΩ} E)_j`, `right[(j, k1)] = −(Eᵀ A_{ΩW} Y_{k1})_j`.
struct ModalFactors {
    left: DMatrix<f64>,
    right: DMatrix<f64>,
    response: DMatrix<f64>,
}

impl ModalFactors {
    fn new(sys: &GalerkinSystem, tg: &TimeGrid, window: &TimeWindow, pasted: &DMatrix<f64>) -> Self {
        let part = &sys.part;
        let a_ow = sys.op.block(&part.idx_omega, &part.idx_w1);
        let coupled = sys.modes.transpose() * (&a_ow * pasted);
        let left = coupled.transpose() * part.spacing();
        let right = -coupled;
        ModalFactors { left, right, response: unit_responses(sys, tg, window) }
    }
    fn frame(&self, m: usize, chi: f64) -> DMatrix<f64> {
        let n = self.response.nrows();
        let mut scaled = self.right.clone();
        for j in 0..n {
            let r = self.response[(j, m)];
            scaled.row_mut(j).scale_mut(r);
        }
        (&self.left * scaled) * chi
    }
}

/// Shared inputs for Γ assembly. The q ≡ 0 reference factors are built once at
/// construction, before any member is assembled.
pub struct GammaContext {
    pub op: FracLapOperator,
    pub part: DomainPartition,
    pub tg: TimeGrid,
    pub window: TimeWindow,
    pub k: usize,
    pasted: DMatrix<f64>,
    reference: ModalFactors,
}

impl GammaContext {
    pub fn new(
        op: &FracLapOperator,
        part: &DomainPartition,
        tg: &TimeGrid,
        window: &TimeWindow,
        basis: &WeightedBasis1D,
        k: usize,
    ) -> Result<Self> {
        check_window(tg, window)?;
        if k == 0 || k > basis.len() {
            return Err(Error::InvalidParameter(format!("K = {k} outside the basis of size {}", basis.len())));
        }
        let cols: Vec<Vec<f64>> = (0..k).map(|kk| pasted_basis(part, basis, kk)).collect();
        let pasted = DMatrix::from_fn(part.idx_w1.len(), k, |i, kk| cols[kk][i]);
        let sys0 = GalerkinSystem::new(op, part, &Potential::zero(part))?;
        let reference = ModalFactors::new(&sys0, tg, window, &pasted);
        Ok(GammaContext { op: op.clone(), part: part.clone(), tg: tg.clone(), window: window.clone(), k, pasted, reference })
    }

    pub fn window_hash(&self) -> u64 {
        hash_f64s(&self.window.values)
    }

    pub fn gamma_tensor(&self, q: &Potential, exec: Exec) -> Result<GammaTensor> {
        check_gauge(q)?;
        let sys = GalerkinSystem::new(&self.op, &self.part, q)?;
        let factors = ModalFactors::new(&sys, &self.tg, &self.window, &self.pasted);
        let samples = self.tg.samples();
        let frames = map_range(exec, samples, |m| {
            let chi = self.window.values[m];
            if chi == 0.0 {
                return DMatrix::zeros(self.k, self.k);
            }
            factors.frame(m, chi) - self.reference.frame(m, chi)
        });
        let mut out = GammaTensor::zeros(self.k, samples);
        for (m, f) in frames.iter().enumerate() {
            for k1 in 0..self.k {
                for k2 in 0..self.k {
                    out.set(k1, k2, m, f[(k2, k1)]);
                }
            }
        }
        out.window_hash = self.window_hash();
        out.window_norm = self.window.norm_w2inf;
        out.q_hash = q.content_hash();
        Ok(out)
    }

    pub fn gamma_family(&self, members: &[Potential], exec: Exec) -> Result<Vec<GammaTensor>> {
        try_map_range(exec, members.len(), |i| self.gamma_tensor(&members[i], Exec::Sequential))
    }
}

pub fn gamma_tensor(
    op: &FracLapOperator,
    part: &DomainPartition,
    tg: &TimeGrid,
    window: &TimeWindow,
    basis: &WeightedBasis1D,
    k: usize,
    q: &Potential,
) -> Result<GammaTensor> {
    GammaContext::new(op, part, tg, window, basis, k)?.gamma_tensor(q, Exec::default_policy())
}
