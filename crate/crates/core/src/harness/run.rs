//! Experiment orchestration: one entry point per selector.

use super::cache::{decode_matrices, encode_matrices, sha256_hex, Cache, CacheKey};
use super::config::{ExperimentConfig, OperatorKind, Selector};
use super::manifest::{CheckRecord, ProducedFile, RunManifest, StageTiming};
use crate::dn::{integral_identity_residual, self_adjoint_residual, InputBasis};
use crate::error::{Error, Result};
use crate::fit::fit_line;
use crate::forward::{
    energy_report, solve_forward, solve_forward_modal, weak_form_residual, ForwardInputs, GalerkinSystem, Mode,
    Potential,
};
use crate::fractional::{assemble_singular_integral, assemble_spectral, cs_extend, trace_constant, FracLapOperator};
use crate::grid::{build_grid, make_time_window, partition_domain, Grid, Interval, TimeGrid};
use crate::instability::{
    delta_net_budget, gram_schmidt_on_grid, gram_schmidt_weighted, mandache_family, packing_constant,
    poisson_extend_1d, tuple_count, GammaContext, NetInputs, Normalization,
};
use crate::par::{try_map_range, Exec};
use crate::runge::{
    adjoint_identity_check, default_dictionary, density_probe, runge_approximate, runge_tradeoff_sweep, stability_sweep,
    PoissonMatrix, RungeContext, StabilitySetup, SvdSystem, NoiseModel, TestNorm,
};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};
use std::fmt::Write as _;
use std::path::PathBuf;
use std::time::Instant;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Independent seed for a named stage.
pub fn substream(seed: u64, stage: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(stage.as_bytes());
    u64::from_le_bytes(h.finalize()[..8].try_into().expect("eight bytes"))
}

/// The parameterization written into every table: everything except paths and thread count.
pub fn provenance_config(cfg: &ExperimentConfig) -> ExperimentConfig {
    let mut p = cfg.clone();
    p.out_dir = PathBuf::new();
    p.cache_dir = None;
    p.threads = None;
    p
}

struct Runner<'a> {
    cfg: &'a ExperimentConfig,
    out_dir: PathBuf,
    cache: Option<Cache>,
    exec: Exec,
    header: String,
    stages: Vec<StageTiming>,
    files: Vec<ProducedFile>,
    checks: Vec<CheckRecord>,
}

fn f(v: f64) -> String {
    format!("{v:.12e}")
}

impl<'a> Runner<'a> {
    fn stage<T>(&mut self, name: &str, body: impl FnOnce(&mut Self) -> Result<(T, bool)>) -> Result<T> {
        let start = Instant::now();
        let (value, cached) = body(self)?;
        self.stages.push(StageTiming { name: name.to_string(), seconds: start.elapsed().as_secs_f64(), cached });
        Ok(value)
    }

    fn emit(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        std::fs::write(self.out_dir.join(name), bytes)?;
        self.files.push(ProducedFile { name: name.to_string(), sha256: sha256_hex(bytes), bytes: bytes.len() as u64 });
        Ok(())
    }

    /// A CSV table prefixed by the provenance header.
    fn table(&mut self, name: &str, body: &str) -> Result<()> {
        let text = format!("{}{body}", self.header);
        self.emit(name, text.as_bytes())
    }

    fn check(&mut self, name: &str, value: f64, bound: &str, pass: bool) {
        self.checks.push(CheckRecord { name: name.to_string(), value, bound: bound.to_string(), pass: pass && !value.is_nan() });
    }

    fn at_most(&mut self, name: &str, value: f64, limit: f64) {
        self.check(name, value, &format!("<= {limit:e}"), value <= limit);
    }

    fn cached_bytes(&mut self, key: &CacheKey, compute: impl FnOnce() -> Result<Vec<u8>>) -> Result<(Vec<u8>, bool)> {
        if let Some(cache) = &self.cache {
            if let Some(bytes) = cache.get(key)? {
                return Ok((bytes, true));
            }
        }
        let bytes = compute()?;
        if let Some(cache) = &self.cache {
            cache.put(key, &bytes)?;
        }
        Ok((bytes, false))
    }

    fn operator(&mut self, grid: &Grid, kind: OperatorKind, s: f64) -> Result<FracLapOperator> {
        let tag = match kind {
            OperatorKind::Spectral => "spectral",
            OperatorKind::SingularIntegral => "singular-integral",
        };
        let key = CacheKey::new(
            "operator",
            &[tag.as_bytes(), &s.to_le_bytes(), &grid.half_width().to_le_bytes(), &(grid.len() as u64).to_le_bytes()],
        );
        let grid = grid.clone();
        self.stage("assemble-operator", |r| {
            let (bytes, hit) = r.cached_bytes(&key, || {
                let op = match kind {
                    OperatorKind::Spectral => assemble_spectral(&grid, s)?,
                    OperatorKind::SingularIntegral => assemble_singular_integral(&grid, s)?,
                };
                Ok(op.to_frac1_bytes())
            })?;
            Ok((FracLapOperator::read_frac1(&bytes[..])?, hit))
        })
    }

    /// Poisson matrix and its singular system, cached as raw matrices.
    fn runge_context(&mut self, sys: &GalerkinSystem, tg: &TimeGrid, basis: &InputBasis) -> Result<RungeContext> {
        let op_digest = Sha256::digest(sys.op.to_frac1_bytes());
        let q_bytes: Vec<u8> = sys.q.values().iter().flat_map(|v| v.to_le_bytes()).collect();
        let key = CacheKey::new(
            "poisson",
            &[
                &op_digest,
                &q_bytes,
                &basis.content_hash().to_le_bytes(),
                &tg.horizon().to_le_bytes(),
                &(tg.steps() as u64).to_le_bytes(),
            ],
        );
        self.stage("assemble-poisson", |r| {
            let (bytes, hit) = r.cached_bytes(&key, || {
                let ctx = RungeContext::new(sys, tg, basis)?;
                let p = &ctx.poisson;
                let weights = DMatrix::from_column_slice(p.weights.len(), 1, &p.weights);
                let scalars = DMatrix::from_column_slice(2, 1, &[p.sigma_min, ctx.svd.rank as f64]);
                let sigma = DMatrix::from_column_slice(ctx.svd.sigma.len(), 1, &ctx.svd.sigma);
                Ok(encode_matrices(&[&p.matrix, &p.input_gram, &weights, &scalars, &sigma, &ctx.svd.phi, &ctx.svd.w]))
            })?;
            let mut m = decode_matrices(&bytes)?.into_iter();
            let mut next = || m.next().ok_or_else(|| Error::Format("poisson cache entry is short".into()));
            let (matrix, input_gram, weights, scalars, sigma, phi, w) =
                (next()?, next()?, next()?, next()?, next()?, next()?, next()?);
            let poisson = PoissonMatrix {
                matrix,
                input_gram,
                weights: weights.iter().copied().collect(),
                q_hash: sys.q.content_hash(),
                basis: basis.clone(),
                part: sys.part.clone(),
                tg: tg.clone(),
                sigma_min: scalars[0],
            };
            let svd = SvdSystem { sigma: sigma.iter().copied().collect(), phi, w, rank: scalars[1] as usize };
            Ok((RungeContext { q: sys.q.clone(), poisson, svd }, hit))
        })
    }

    fn forward_check(&mut self) -> Result<()> {
        let cfg = self.cfg;
        let (part, tg) = (cfg.partition()?, cfg.time_grid()?);
        let op = self.operator(&part.grid, cfg.operator.kind, cfg.operator.s)?;
        let fb = &cfg.forward;
        let mode = cfg.solver.mode;
        let body = self.stage("forward-solves", |r| {
            let zero = GalerkinSystem::new(&op, &part, &Potential::zero(&part))?;
            let bump = GalerkinSystem::new(&op, &part, &Potential::bump(&part, 0.0, 1.0, fb.amplitude))?;
            let k = fb.mode_index;
            if k >= zero.interior_len() {
                return Err(Error::Config(format!("field `forward.mode_index`: {k} exceeds the interior size")));
            }
            let phi: Vec<f64> = zero.modes.column(k).iter().copied().collect();
            let u = solve_forward(&zero, &tg, &ForwardInputs { phi: Some(&phi), ..Default::default() }, Mode::Spectral)?;
            let w = zero.nu[k].sqrt();
            let mut err = 0.0f64;
            for m in 0..tg.samples() {
                let c = (w * tg.time(m)).cos();
                for (a, &i) in part.idx_omega.iter().enumerate() {
                    err = err.max((u.values[(i, m)] - c * phi[a]).abs());
                }
            }
            r.at_most("eigenmode_cosine_error", err, 1e-10);

            let basis = InputBasis::default_for(&part, &tg, fb.temporal_profiles);
            let coeffs: Vec<f64> = (0..basis.len()).map(|j| 1.0 / (1.0 + j as f64)).collect();
            let ext = basis.combine(&part, &tg, &coeffs)?;
            let mode_name = match mode {
                Mode::Spectral => "spectral",
                Mode::Newmark => "newmark",
            };
            let mut body = String::from("case,potential,mode,solution_norm,data_norm,ratio,drift\n");
            let mut driven_field = None;
            for (label, sys) in [("q0", &zero), ("bump", &bump)] {
                let free = ForwardInputs { phi: Some(&phi), ..Default::default() };
                let field = solve_forward(sys, &tg, &free, mode)?;
                let rep = energy_report(sys, &tg, &field, &free)?;
                let drift = rep.drift.unwrap_or(f64::NAN);
                r.at_most(&format!("energy_drift_{label}"), drift, 1e-10);
                writeln!(body, "free,{label},{mode_name},{},{},{},{}", f(rep.solution_norm), f(rep.data_norm), f(rep.ratio), f(drift))
                    .ok();
                let driven = ForwardInputs { exterior: Some(&ext), ..Default::default() };
                let field = solve_forward(sys, &tg, &driven, mode)?;
                let rep = energy_report(sys, &tg, &field, &driven)?;
                r.check(&format!("energy_ratio_{label}"), rep.ratio, "finite and > 0", rep.ratio.is_finite() && rep.ratio > 0.0);
                writeln!(body, "driven,{label},{mode_name},{},{},{},", f(rep.solution_norm), f(rep.data_norm), f(rep.ratio)).ok();
                let modal = solve_forward_modal(sys, &tg, &driven)?;
                r.at_most(&format!("weak_form_residual_{label}"), weak_form_residual(sys, &tg, &modal.track), 1e-8);
                if label == "bump" {
                    driven_field = Some(field);
                }
            }
            let mut wave = Vec::new();
            driven_field.expect("bump case ran").write_fwav1(tg.horizon(), &mut wave)?;
            Ok(((body, wave), false))
        })?;
        self.table("energy.csv", &body.0)?;
        self.emit("driven_solution.fwav", &body.1)
    }

    fn dn_identities(&mut self) -> Result<()> {
        let cfg = self.cfg;
        let (part, tg) = (cfg.partition()?, cfg.time_grid()?);
        let op = self.operator(&part.grid, cfg.operator.kind, cfg.operator.s)?;
        let db = &cfg.dn;
        let exec = self.exec;
        let seed = substream(cfg.seed, "dn-identities");
        let body = self.stage("identities", |r| {
            let systems = db
                .amplitudes
                .iter()
                .map(|&a| GalerkinSystem::new(&op, &part, &Potential::bump(&part, 0.0, 1.0, a)))
                .collect::<Result<Vec<_>>>()?;
            let basis = InputBasis::default_for(&part, &tg, db.temporal_profiles);
            if basis.len() < 2 {
                return Err(Error::Config("field `dn.temporal_profiles`: need at least two basis inputs".into()));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let pairs: Vec<(usize, usize)> = (0..db.input_pairs)
                .map(|_| {
                    let a = rng.gen_range(0..basis.len());
                    let b = (a + rng.gen_range(1..basis.len())) % basis.len();
                    (a, b)
                })
                .collect();
            let signals = (0..basis.len()).map(|j| basis.element(&part, &tg, j)).collect::<Result<Vec<_>>>()?;
            let n = systems.len();
            let p = pairs.len();
            let selfadj = try_map_range(exec, n * p, |i| {
                let (a, b) = pairs[i % p];
                self_adjoint_residual(&systems[i / p], &tg, &signals[a], &signals[b])
            })?;
            let integral = try_map_range(exec, n * n * p, |i| {
                let (a, b) = pairs[i % p];
                let (s1, s2) = ((i / p) / n, (i / p) % n);
                integral_identity_residual(&systems[s1], &systems[s2], &tg, &signals[a], &signals[b])
            })?;
            let mut body = String::from("identity,q1_amplitude,q2_amplitude,input_a,input_b,lhs,rhs,residual\n");
            let mut worst_sa = 0.0f64;
            for (i, res) in selfadj.iter().enumerate() {
                let (a, b) = pairs[i % p];
                let amp = db.amplitudes[i / p];
                worst_sa = worst_sa.max(*res);
                writeln!(body, "self-adjoint,{amp},{amp},{a},{b},,,{}", f(*res)).ok();
            }
            let (mut worst_int, mut worst_diag) = (0.0f64, 0.0f64);
            for (i, rep) in integral.iter().enumerate() {
                let (a, b) = pairs[i % p];
                let (s1, s2) = ((i / p) / n, (i / p) % n);
                if s1 == s2 {
                    worst_diag = worst_diag.max(rep.rhs.abs());
                } else {
                    worst_int = worst_int.max(rep.residual);
                }
                writeln!(
                    body,
                    "integral,{},{},{a},{b},{},{},{}",
                    db.amplitudes[s1],
                    db.amplitudes[s2],
                    f(rep.lhs),
                    f(rep.rhs),
                    f(rep.residual)
                )
                .ok();
            }
            r.at_most("self_adjoint_residual_max", worst_sa, 1e-6);
            r.at_most("integral_identity_residual_max", worst_int, 1e-6);
            r.at_most("integral_identity_equal_potentials_rhs", worst_diag, 1e-8);
            Ok((body, false))
        })?;
        self.table("identities.csv", &body)
    }

    fn runge_sweep(&mut self) -> Result<()> {
        let cfg = self.cfg;
        let (part, tg) = (cfg.partition()?, cfg.time_grid()?);
        let op = self.operator(&part.grid, cfg.operator.kind, cfg.operator.s)?;
        let rb = &cfg.runge;
        let sys = GalerkinSystem::new(&op, &part, &Potential::bump(&part, 0.0, 1.0, rb.amplitude))?;
        let basis = InputBasis::default_for(&part, &tg, rb.temporal_profiles);
        let ctx = self.runge_context(&sys, &tg, &basis)?;
        let seed = substream(cfg.seed, "runge-adjoint");
        let (tradeoff, sv, density) = self.stage("runge-sweep", |r| {
            let (p, svd) = (&ctx.poisson, &ctx.svd);
            let tn = TestNorm::default_for(&op, &part, &tg)?;
            let target = default_dictionary(&part, &tg, &tn, 3, 3).swap_remove(0);
            let norm = p.norm(&target);
            let [lo, hi] = rb.alpha_half_decades;
            let alphas: Vec<f64> = (lo..=hi).map(|k| 10f64.powf(-(k as f64) / 2.0)).collect();
            let table = runge_tradeoff_sweep(svd, p, &target, &alphas)?;
            r.check("tradeoff_error_nonincreasing", table.error_nonincreasing as u8 as f64, "== 1", table.error_nonincreasing);
            r.check("tradeoff_norm_nondecreasing", table.norm_nondecreasing as u8 as f64, "== 1", table.norm_nondecreasing);
            let mut body = String::from("alpha,error,input_norm,retained,input_bound,identity_gap\n");
            let (mut bound_excess, mut identity_gap) = (f64::NEG_INFINITY, 0.0f64);
            for row in &table.rows {
                let bound = norm / row.alpha;
                bound_excess = bound_excess.max(row.input_norm / bound - 1.0);
                let direct = runge_approximate(svd, p, &target, row.alpha)?;
                let gap = (direct.achieved_error - direct.predicted_error).abs() / norm;
                identity_gap = identity_gap.max(gap);
                writeln!(body, "{},{},{},{},{},{}", f(row.alpha), f(row.error), f(row.input_norm), row.retained, f(bound), f(gap))
                    .ok();
            }
            r.at_most("input_norm_bound_excess", bound_excess, 1e-12);
            r.at_most("spectral_error_identity_gap", identity_gap, 1e-10);
            r.at_most("adjoint_identity_residual", adjoint_identity_check(&sys, p, rb.adjoint_trials, seed)?, 1e-5);

            let mut sv = String::from("j,sigma\n");
            for (j, s) in svd.sigma.iter().enumerate() {
                writeln!(sv, "{j},{}", f(*s)).ok();
            }
            let sizes: Vec<usize> = rb.density_sizes.iter().copied().filter(|&m| m >= 1 && m <= basis.len()).collect();
            let one = DMatrix::from_element(p.interior_len(), tg.samples(), 1.0);
            let probe = density_probe(p, &[one, target.clone()], &sizes)?;
            let mut density = String::from("columns,constant_residual,constant_ratio,dictionary_residual,dictionary_ratio\n");
            for (i, m) in sizes.iter().enumerate() {
                writeln!(
                    density,
                    "{m},{},{},{},{}",
                    f(probe[0][i]),
                    f(probe[0][i] / probe[0][0]),
                    f(probe[1][i]),
                    f(probe[1][i] / probe[1][0])
                )
                .ok();
            }
            Ok(((body, sv, density), false))
        })?;
        self.table("tradeoff.csv", &tradeoff)?;
        self.table("singular_values.csv", &sv)?;
        self.table("density.csv", &density)
    }

    fn stability(&mut self) -> Result<()> {
        let cfg = self.cfg;
        let (part, tg) = (cfg.partition()?, cfg.time_grid()?);
        let op = self.operator(&part.grid, cfg.operator.kind, cfg.operator.s)?;
        let sb = &cfg.stability;
        let exec = self.exec;
        let noise = (sb.noise > 0.0).then(|| NoiseModel { eta: sb.noise, seed: substream(cfg.seed, "stability-noise") });
        let (rows, fit) = self.stage("stability-sweep", |r| {
            let basis = InputBasis::default_for(&part, &tg, sb.temporal_profiles);
            let tn = TestNorm::default_for(&op, &part, &tg)?;
            let dict = default_dictionary(&part, &tg, &tn, sb.dictionary_k, sb.dictionary_l);
            let setup = StabilitySetup { op: &op, part: &part, tg: &tg, basis: &basis, dictionary: &dict };
            let q1 = Potential::bump(&part, 0.0, 1.0, sb.base_amplitude);
            let shape = Potential::bump(&part, sb.shape_center, sb.shape_radius, 1.0);
            let params: Vec<f64> = (0..sb.members).map(|k| sb.ratio.powi(k as i32)).collect();
            let rec = stability_sweep(&setup, &q1, &shape, &params, noise, exec)?;
            r.check("table_monotone", rec.monotone as u8 as f64, "== 1", rec.monotone);
            r.check("log_model_sigma", rec.fit.sigma, "> 0", rec.fit.sigma > 0.0);
            let finite = rec.fit.resid_log.is_finite() && rec.fit.resid_pow.is_finite() && rec.fit.c_log.is_finite();
            r.check("fit_residuals_finite", rec.fit.resid_log, "finite", finite);
            let mut rows = String::from("family_param,delta,error\n");
            for row in &rec.rows {
                writeln!(rows, "{},{},{}", f(row.family_param), f(row.delta), f(row.error)).ok();
            }
            let ft = &rec.fit;
            let fit = format!(
                "model,constant,exponent,rms_residual\nlog,{},{},{}\npower,{},{},{}\n",
                f(ft.c_log),
                f(ft.sigma),
                f(ft.resid_log),
                f(ft.c_pow),
                f(ft.a),
                f(ft.resid_pow)
            );
            Ok(((rows, fit), false))
        })?;
        self.table("stability.csv", &rows)?;
        self.table("stability_fit.csv", &fit)
    }

    fn instability(&mut self) -> Result<()> {
        let cfg = self.cfg;
        let ib = &cfg.instability;
        let g = build_grid(ib.half_width, ib.points, 1)?;
        let iv = |p: [f64; 2]| Interval::new(p[0], p[1]);
        let part = partition_domain(&g, iv(cfg.partition.omega), iv(cfg.partition.w1), iv(cfg.partition.w2))?;
        let tg = TimeGrid::new(cfg.time.horizon, ib.steps)?;
        let op = self.operator(&g, ib.operator, ib.s)?;
        let exec = self.exec;

        let (dump, harmonics) = self.stage("basis", |r| {
            let b = gram_schmidt_weighted(12, ib.s, 400)?;
            r.at_most("basis_gram_defect", b.gram_defect, 1e-10);
            r.at_most("basis_moment_defect", b.moment_defect, 1e-9);
            r.at_most("basis_envelope_excess", b.envelope_excess(40), 1e-9);
            let mut dump = Vec::new();
            b.write_dump(&mut dump)?;
            let mut harmonics = String::from("k,l2_norm,log2_l2_norm\n");
            let (mut ks, mut logs) = (Vec::new(), Vec::new());
            for k in 0..=10 {
                let e = poisson_extend_1d(&b, k, Normalization::Unit, 200)?;
                writeln!(harmonics, "{k},{},{}", f(e.l2_norm), f(e.l2_norm.log2())).ok();
                if k >= 1 {
                    ks.push(k as f64);
                    logs.push(e.l2_norm.log2());
                }
            }
            let slope = fit_line(&ks, &logs)?.slope;
            r.at_most("harmonic_decay_slope_log2", slope, -0.85);
            Ok(((String::from_utf8(dump).expect("ascii dump"), harmonics), false))
        })?;
        self.table("basis.csv", &dump)?;
        self.table("harmonics.csv", &harmonics)?;

        let basis = gram_schmidt_on_grid(ib.k, ib.s, &part)?;
        let contexts = self.stage("gamma-contexts", |_| {
            let ctxs = ib
                .windows
                .iter()
                .map(|w| {
                    let win = make_time_window(&tg, w.shape, (w.support[0], w.support[1]))?;
                    GammaContext::new(&op, &part, &tg, &win, &basis, ib.k)
                })
                .collect::<Result<Vec<_>>>()?;
            Ok((ctxs, false))
        })?;

        let (gamma_bin, envelope) = self.stage("gamma-probe", |r| {
            let ctx = &contexts[0];
            let zero = ctx.gamma_tensor(&Potential::zero(&part), exec)?;
            r.at_most("gamma_zero_potential", zero.max_abs(), 1e-10);
            let g = ctx.gamma_tensor(&Potential::bump(&part, 0.0, 1.0, ib.probe_amplitude), exec)?;
            r.at_most("gamma_symmetry_residual", g.symmetry_residual(), 1e-6);
            let env = g.envelope();
            let xs: Vec<f64> = (0..env.len()).map(|k| k as f64).collect();
            let fit = fit_line(&xs, &env.iter().map(|v| v.ln()).collect::<Vec<_>>())?;
            r.at_most("gamma_envelope_slope", fit.slope, -0.3);
            r.check("gamma_envelope_r2", fit.r2, ">= 0.9", fit.r2 >= 0.9);
            let mut envelope = String::from("k,envelope\n");
            for (k, v) in env.iter().enumerate() {
                writeln!(envelope, "{k},{}", f(*v)).ok();
            }
            let mut bin = Vec::new();
            g.write_gamma1(&mut bin)?;
            Ok(((bin, envelope), false))
        })?;
        self.emit("gamma_probe.gamma1", &gamma_bin)?;
        self.table("gamma_envelope.csv", &envelope)?;

        let summary = self.stage("instability-sweep", |r| {
            let beta = packing_constant(ib.alpha) * 0.05 / 0.2f64.powf(ib.alpha) * ib.beta_scale;
            let fams = ib
                .epsilons
                .iter()
                .map(|&e| mandache_family(e, beta, ib.alpha, ib.r0, &part))
                .collect::<Result<Vec<_>>>()?;
            let rep = crate::instability::instability_sweep(&fams, &contexts, exec)?;
            r.check("gap_monotone", rep.monotone as u8 as f64, "== 1", rep.monotone);
            for row in &rep.rows {
                let margin = row.min_separation - row.epsilon;
                r.check(&format!("separation_eps_{}", row.epsilon), row.min_separation, ">= epsilon", margin >= -1e-15);
            }
            let slope = rep.fit.as_ref().map_or(f64::NAN, |ft| ft.slope);
            r.check("gap_fit_slope", slope, "< 0", slope < 0.0);
            Ok((rep.summary(), false))
        })?;
        self.table("instability.csv", &summary)
    }

    fn cs_trace(&mut self) -> Result<()> {
        let cfg = self.cfg;
        let g = build_grid(cfg.grid.half_width, cfg.grid.points, 1)?;
        let s = cfg.operator.s;
        let op = self.operator(&g, cfg.operator.kind, s)?;
        let cb = &cfg.cs_trace;
        let omega = Interval::new(cfg.partition.omega[0], cfg.partition.omega[1]);
        let body = self.stage("cs-extension", |r| {
            let v: Vec<f64> = g.nodes().iter().map(|x| (-(x / cb.width).powi(2)).exp()).collect();
            let ext = cs_extend(&g, &v, s, cb.levels, cb.y_max)?;
            let av = op.apply(&v);
            let a = trace_constant(s);
            let mut body = String::from("x,v,minus_trace_scaled,frac_lap\n");
            let (mut num, mut den) = (0.0, 0.0);
            for i in 0..g.len() {
                let x = g.node(i);
                if omega.contains(x) {
                    let t = -ext.trace[i] / a;
                    num += (t - av[i]).powi(2);
                    den += av[i] * av[i];
                    writeln!(body, "{},{},{},{}", f(x), f(v[i]), f(t), f(av[i])).ok();
                }
            }
            let rel = (num / den).sqrt();
            r.at_most("trace_relative_l2_error", rel, cb.tolerance);
            r.check("trace_constant", a, "finite and > 0", a.is_finite() && a > 0.0);
            Ok((body, false))
        })?;
        self.table("cs_trace.csv", &body)
    }

    fn net_budget(&mut self) -> Result<()> {
        let cfg = self.cfg;
        let nb = &cfg.net_budget;
        let body = self.stage("net-budget", |r| {
            let mut body = String::from(
                "n,delta,sigma_tilde,sigma_star,delta_prime,y_prime,n_star,n_star_bound,log_y,log_y_bound,residual\n",
            );
            let (mut worst, mut chain_ok, mut counts_ok) = (0.0f64, true, true);
            for &n in &nb.dims {
                for &delta in &nb.deltas {
                    let b = delta_net_budget(NetInputs {
                        n,
                        s: cfg.operator.s,
                        delta,
                        r: nb.r,
                        t: cfg.time.horizon,
                        chi_norm: nb.chi_norm,
                        c_prime_big: nb.c_prime_big,
                        c_prime_small: nb.c_prime_small,
                    })?;
                    worst = worst.max(b.residual);
                    chain_ok &= b.chain().iter().all(|(_, ok)| *ok);
                    let direct: u64 =
                        (0..=b.sigma_star as usize).map(|s| tuple_count(n, s)).collect::<Result<Vec<_>>>()?.iter().sum();
                    counts_ok &= direct == b.n_star;
                    writeln!(
                        body,
                        "{n},{},{},{},{},{},{},{},{},{},{}",
                        f(delta),
                        f(b.sigma_tilde),
                        b.sigma_star,
                        f(b.delta_prime),
                        f(b.y_prime),
                        b.n_star,
                        f(b.n_star_bound),
                        f(b.log_y),
                        f(b.log_y_bound),
                        f(b.residual)
                    )
                    .ok();
                }
            }
            r.at_most("defining_equation_residual", worst, 1e-10);
            r.check("step_chain", chain_ok as u8 as f64, "== 1", chain_ok);
            r.check("tuple_counts", counts_ok as u8 as f64, "== 1", counts_ok);
            Ok((body, false))
        })?;
        self.table("net_budget.csv", &body)
    }
}

/// Run the selected experiment, writing tables, `checks.csv` and `manifest.json`
/// into the output directory. Failed checks are recorded, not raised.
pub fn run(cfg: &ExperimentConfig) -> Result<RunManifest> {
    cfg.validate()?;
    if let Some(t) = cfg.threads {
        crate::par::set_threads(t);
    }
    std::fs::create_dir_all(&cfg.out_dir)?;
    let cache = cfg.cache_dir.as_deref().map(Cache::open).transpose()?;
    let prov = provenance_config(cfg).canonical_json();
    let config_hash = sha256_hex(prov.as_bytes());
    let header = format!(
        "# fracwave {VERSION} selector={} seed={} config_sha256={config_hash}\n# config={prov}\n",
        cfg.selector, cfg.seed
    );
    let mut r = Runner {
        cfg,
        out_dir: cfg.out_dir.clone(),
        cache,
        exec: Exec::default_policy(),
        header,
        stages: Vec::new(),
        files: Vec::new(),
        checks: Vec::new(),
    };
    match cfg.selector {
        Selector::ForwardCheck => r.forward_check()?,
        Selector::DnIdentities => r.dn_identities()?,
        Selector::RungeSweep => r.runge_sweep()?,
        Selector::StabilitySweep => r.stability()?,
        Selector::Instability1d => r.instability()?,
        Selector::CsTrace => r.cs_trace()?,
        Selector::NetBudget => r.net_budget()?,
    }
    let mut checks = String::from("check,value,bound,pass\n");
    for c in &r.checks {
        writeln!(checks, "{},{},{},{}", c.name, f(c.value), c.bound, c.pass).ok();
    }
    r.table("checks.csv", &checks)?;
    let manifest = RunManifest {
        selector: cfg.selector.to_string(),
        config_hash,
        version: VERSION.to_string(),
        seed: cfg.seed,
        stages: r.stages,
        files: r.files,
        checks: r.checks,
    };
    manifest.write(&cfg.out_dir.join("manifest.json"))?;
    Ok(manifest)
}

/// Exit status for a finished run or an error.
pub fn exit_code(outcome: &Result<RunManifest>) -> i32 {
    match outcome {
        Ok(m) if m.passed() => 0,
        Ok(_) => 1,
        Err(Error::Config(_)) => 2,
        Err(Error::Io(_)) | Err(Error::CacheCorrupted(_)) => 3,
        Err(_) => 1,
    }
}
