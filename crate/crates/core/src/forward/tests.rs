use super::*;
use crate::fractional::assemble_spectral;
use crate::grid::{build_grid, partition_domain, Interval};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn setup(n: usize, steps: usize) -> (DomainPartition, TimeGrid, FracLapOperator) {
    let g = build_grid(8.0, n, 1).unwrap();
    let part = partition_domain(&g, Interval::new(-1.0, 1.0), Interval::new(2.0, 3.0), Interval::new(2.0, 3.0))
        .unwrap();
    let tg = TimeGrid::new(2.0, steps).unwrap();
    let op = assemble_spectral(&g, 0.5).unwrap();
    (part, tg, op)
}

fn window_signal(part: &DomainPartition, tg: &TimeGrid, node: usize, freq: f64) -> ExteriorSignal {
    let t = tg.horizon();
    let temporal: Vec<f64> = tg
        .times()
        .iter()
        .map(|&x| (std::f64::consts::PI * x / t).sin().powi(2) * (freq * x).cos())
        .collect();
    let field = SpaceTimeField::separable(part.grid.len(), &[part.idx_w1[node]], &[1.0], &temporal);
    ExteriorSignal::new(part, tg, field).unwrap()
}

fn random_source(part: &DomainPartition, tg: &TimeGrid, rng: &mut ChaCha8Rng) -> SpaceTimeField {
    let mut f = SpaceTimeField::zeros(part.grid.len(), tg.samples());
    for &i in &part.idx_omega {
        for m in 0..tg.samples() {
            f.values[(i, m)] = rng.gen_range(-1.0..1.0);
        }
    }
    f
}

#[test]
fn zero_data_zero_solution() {
    let (part, tg, op) = setup(64, 32);
    let sys = GalerkinSystem::new(&op, &part, &Potential::zero(&part)).unwrap();
    for mode in [Mode::Spectral, Mode::Newmark] {
        let u = solve_forward(&sys, &tg, &ForwardInputs::default(), mode).unwrap();
        assert_eq!(u.values.amax(), 0.0);
    }
}

#[test]
fn cosine_oracle_spectral() {
    let (part, tg, op) = setup(128, 128);
    let sys = GalerkinSystem::new(&op, &part, &Potential::zero(&part)).unwrap();
    let k = 2;
    let phi: Vec<f64> = sys.modes.column(k).iter().copied().collect();
    let u = solve_forward(&sys, &tg, &ForwardInputs { phi: Some(&phi), ..Default::default() }, Mode::Spectral)
        .unwrap();
    let w = sys.nu[k].sqrt();
    let mut err = 0.0f64;
    for m in 0..tg.samples() {
        let c = (w * tg.time(m)).cos();
        for (a, &i) in part.idx_omega.iter().enumerate() {
            err = err.max((u.values[(i, m)] - c * phi[a]).abs());
        }
    }
    assert!(err <= 1e-10, "max error {err}");
}

fn newmark_error(steps: usize) -> f64 {
    let (part, tg, op) = setup(128, steps);
    let sys = GalerkinSystem::new(&op, &part, &Potential::zero(&part)).unwrap();
    let phi: Vec<f64> = sys.modes.column(0).iter().copied().collect();
    let u = solve_forward(&sys, &tg, &ForwardInputs { phi: Some(&phi), ..Default::default() }, Mode::Newmark)
        .unwrap();
    let w = sys.nu[0].sqrt();
    let mut err = 0.0f64;
    for m in 0..tg.samples() {
        let c = (w * tg.time(m)).cos();
        for (a, &i) in part.idx_omega.iter().enumerate() {
            err = err.max((u.values[(i, m)] - c * phi[a]).abs());
        }
    }
    err
}

#[test]
fn newmark_second_order() {
    let ratio = newmark_error(64) / newmark_error(128);
    assert!((ratio - 4.0).abs() <= 0.4, "ratio {ratio}");
}

#[test]
fn newmark_and_spectral_agree_to_second_order() {
    let gap = |steps: usize| {
        let (part, tg, op) = setup(64, steps);
        let q = Potential::from_fn(&part, |x| 1.0 + x * x);
        let sys = GalerkinSystem::new(&op, &part, &q).unwrap();
        let f = window_signal(&part, &tg, 2, 3.0);
        let inputs = ForwardInputs { exterior: Some(&f), ..Default::default() };
        let a = solve_forward(&sys, &tg, &inputs, Mode::Spectral).unwrap();
        let b = solve_forward(&sys, &tg, &inputs, Mode::Newmark).unwrap();
        (a.values - b.values).amax()
    };
    let ratio = gap(128) / gap(256);
    assert!((ratio - 4.0).abs() <= 0.4, "ratio {ratio}");
}

#[test]
fn backward_is_reflected_forward() {
    let (part, tg, op) = setup(64, 40);
    let sys = GalerkinSystem::new(&op, &part, &Potential::from_fn(&part, |x| 0.5 + x)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let src = random_source(&part, &tg, &mut rng);
    let back = solve_backward(&sys, &tg, &src, Mode::Spectral).unwrap();
    let refl = star(&src);
    let fwd = solve_forward(&sys, &tg, &ForwardInputs { source: Some(&refl), ..Default::default() }, Mode::Spectral)
        .unwrap();
    for m in 0..tg.samples() {
        assert_eq!(back.values.column(m), fwd.values.column(tg.steps() - m));
    }
    let zero = SpaceTimeField::zeros(part.grid.len(), tg.samples());
    assert_eq!(solve_backward(&sys, &tg, &zero, Mode::Spectral).unwrap().values.amax(), 0.0);
    // terminal state vanishes
    assert_eq!(back.values.column(tg.steps()).amax(), 0.0);
}

#[test]
fn adjoint_identity() {
    let (part, tg, op) = setup(128, 128);
    let sys = GalerkinSystem::new(&op, &part, &Potential::from_fn(&part, |x| 2.0 * (1.0 - x * x))).unwrap();
    let f = window_signal(&part, &tg, 3, 2.0);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let src = random_source(&part, &tg, &mut rng);
    let u = solve_forward(&sys, &tg, &ForwardInputs { exterior: Some(&f), ..Default::default() }, Mode::Spectral)
        .unwrap();
    let vf = solve_backward(&sys, &tg, &src, Mode::Spectral).unwrap();
    let h = part.spacing();
    let w = tg.weights();
    let mut lhs = 0.0;
    let mut rhs = 0.0;
    for m in 0..tg.samples() {
        let avf = sys.op.apply(&vf.frame(m));
        for &i in &part.idx_omega {
            lhs += w[m] * h * u.values[(i, m)] * src.values[(i, m)];
        }
        for &i in &part.idx_exterior {
            rhs -= w[m] * h * f.values()[(i, m)] * avf[i];
        }
    }
    assert!((lhs - rhs).abs() <= 1e-6 * lhs.abs().max(rhs.abs()), "{lhs} vs {rhs}");
}

#[test]
fn energy_conserved_and_ratio_stable() {
    let mut ratios = Vec::new();
    for steps in [64, 128] {
        let (part, tg, op) = setup(128, steps);
        let sys = GalerkinSystem::new(&op, &part, &Potential::zero(&part)).unwrap();
        let phi: Vec<f64> = sys.modes.column(0).iter().copied().collect();
        let inputs = ForwardInputs { phi: Some(&phi), ..Default::default() };
        let u = solve_forward(&sys, &tg, &inputs, Mode::Spectral).unwrap();
        let rep = energy_report(&sys, &tg, &u, &inputs).unwrap();
        assert!(rep.drift.unwrap() <= 1e-10, "drift {:?}", rep.drift);

        let f = window_signal(&part, &tg, 1, 4.0);
        let inputs = ForwardInputs { exterior: Some(&f), ..Default::default() };
        let u = solve_forward(&sys, &tg, &inputs, Mode::Spectral).unwrap();
        let rep = energy_report(&sys, &tg, &u, &inputs).unwrap();
        assert!(rep.ratio.is_finite() && rep.ratio > 0.0);
        ratios.push(rep.ratio);
    }
    let change = ratios[0].max(ratios[1]) / ratios[0].min(ratios[1]);
    assert!(change <= 2.0, "{ratios:?}");

    let (part, tg, op) = setup(64, 16);
    let sys = GalerkinSystem::new(&op, &part, &Potential::zero(&part)).unwrap();
    let u = solve_forward(&sys, &tg, &ForwardInputs::default(), Mode::Spectral).unwrap();
    let rep = energy_report(&sys, &tg, &u, &ForwardInputs::default()).unwrap();
    assert_eq!((rep.solution_norm, rep.data_norm, rep.ratio), (0.0, 0.0, 0.0));
}

#[test]
fn star_properties() {
    let (part, tg, _) = setup(32, 20);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let f = random_source(&part, &tg, &mut rng);
    assert_eq!(star(&star(&f)), f);
    let mut c = SpaceTimeField::zeros(32, tg.samples());
    for m in 0..tg.samples() {
        c.values[(3, m)] = 2.5;
    }
    assert_eq!(star(&c), c);
    let w = tg.weights();
    for _ in 0..10 {
        let a: Vec<f64> = (0..tg.samples()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let b: Vec<f64> = (0..tg.samples()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let n = tg.samples();
        let l: f64 = (0..n).map(|m| w[m] * a[m] * b[n - 1 - m]).sum();
        let r: f64 = (0..n).map(|m| w[m] * a[n - 1 - m] * b[m]).sum();
        assert!((l - r).abs() <= 1e-14);
    }
}

#[test]
fn nonlocal_leakage() {
    let (part, tg, op) = setup(256, 256);
    let sys = GalerkinSystem::new(&op, &part, &Potential::zero(&part)).unwrap();
    let phi: Vec<f64> = part
        .idx_omega
        .iter()
        .map(|&i| {
            let x = part.grid.node(i) / 0.8;
            if x.abs() < 1.0 {
                (1.0 - 1.0 / (1.0 - x * x)).exp()
            } else {
                0.0
            }
        })
        .collect();
    let rep = infinite_speed_demo(&sys, &tg, &phi).unwrap();
    assert!(rep.min_magnitude > 0.0);
    assert!(rep.monotone, "{:?}", rep.profile);
    let rep0 = infinite_speed_demo(&sys, &tg, &vec![0.0; phi.len()]).unwrap();
    assert_eq!(rep0.min_magnitude, 0.0);
}

#[test]
fn lift_examples() {
    let (part, tg, op) = setup(128, 16);
    let sys = GalerkinSystem::new(&op, &part, &Potential::zero(&part)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let src = random_source(&part, &tg, &mut rng);
    let plain = lift_exterior(&sys, None, Some(&src), tg.samples()).unwrap();
    assert_eq!(plain, src.restrict(&part.idx_omega));
    let f1 = window_signal(&part, &tg, 0, 1.0);
    let f2 = window_signal(&part, &tg, 5, 2.0);
    let sum = ExteriorSignal::new(
        &part,
        &tg,
        SpaceTimeField { values: f1.values() + f2.values(), velocity: None },
    )
    .unwrap();
    let l1 = lift_exterior(&sys, Some(&f1), None, tg.samples()).unwrap();
    let l2 = lift_exterior(&sys, Some(&f2), None, tg.samples()).unwrap();
    let l12 = lift_exterior(&sys, Some(&sum), None, tg.samples()).unwrap();
    assert!((l12 - (&l1 + &l2)).amax() <= 1e-14 * l1.amax());
}

#[test]
fn point_exterior_data_reaches_every_interior_node() {
    let (part, tg, _) = setup(128, 16);
    let node = part.idx_w1[0];
    let field = SpaceTimeField::separable(part.grid.len(), &[node], &[1.0], &vec![1.0; tg.samples()]);
    let ops = [
        assemble_spectral(&part.grid, 0.3).unwrap(),
        crate::fractional::assemble_singular_integral(&part.grid, 0.5).unwrap(),
    ];
    for op in ops {
        let sys = GalerkinSystem::new(&op, &part, &Potential::zero(&part)).unwrap();
        let reduced = &sys.coupling * field.restrict(&part.idx_exterior);
        for (a, &i) in part.idx_omega.iter().enumerate() {
            assert_eq!(reduced[(a, 0)], op.matrix()[(i, node)]);
            assert!(reduced[(a, 0)] != 0.0);
        }
    }
    // At s = 1/2 the sampled multiplier vanishes at even offsets.
    let op = assemble_spectral(&part.grid, 0.5).unwrap();
    assert_eq!(op.matrix()[(0, 2)], 0.0);
}

#[test]
fn signal_validation() {
    let (part, tg, _) = setup(64, 64);
    let n = part.grid.len();
    let times = tg.times();
    let touching = SpaceTimeField::separable(n, &[part.idx_omega[0]], &[1.0], &times.iter().map(|t| t * t).collect::<Vec<_>>());
    assert!(matches!(ExteriorSignal::new(&part, &tg, touching), Err(Error::Support(_))));
    let moving = SpaceTimeField::separable(n, &[part.idx_w1[0]], &[1.0], &times.iter().map(|t| t.sin()).collect::<Vec<_>>());
    assert!(matches!(ExteriorSignal::new(&part, &tg, moving), Err(Error::IncompatibleData(_))));
    let shifted = SpaceTimeField::separable(n, &[part.idx_w1[0]], &[1.0], &times.iter().map(|t| 1.0 + t).collect::<Vec<_>>());
    assert!(matches!(ExteriorSignal::new(&part, &tg, shifted), Err(Error::IncompatibleData(_))));
}

#[test]
fn negative_modes_rejected() {
    let (part, _, op) = setup(64, 8);
    let q = Potential::from_fn(&part, |_| -1e3);
    assert!(matches!(GalerkinSystem::new(&op, &part, &q), Err(Error::NegativeMode(_))));
}

#[test]
fn weak_form_residual_small() {
    let (part, tg, op) = setup(128, 96);
    let sys = GalerkinSystem::new(&op, &part, &Potential::from_fn(&part, |x| 1.0 + x)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let src = random_source(&part, &tg, &mut rng);
    let f = window_signal(&part, &tg, 4, 3.0);
    let phi: Vec<f64> = (0..sys.interior_len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let inputs = ForwardInputs { exterior: Some(&f), source: Some(&src), phi: Some(&phi), psi: None };
    let sol = solve_forward_modal(&sys, &tg, &inputs).unwrap();
    let r = weak_form_residual(&sys, &tg, &sol.track);
    assert!(r <= 1e-8, "residual {r}");
    let again = solve_forward_modal(&sys, &tg, &inputs).unwrap();
    assert_eq!(sol.field, again.field);
}

#[test]
fn exact_cross_integral_matches_fine_quadrature() {
    let (part, tg, op) = setup(64, 24);
    let sys1 = GalerkinSystem::new(&op, &part, &Potential::from_fn(&part, |x| 1.0 + x)).unwrap();
    let sys2 = GalerkinSystem::new(&op, &part, &Potential::from_fn(&part, |x| 2.0 - x * x)).unwrap();
    let f1 = window_signal(&part, &tg, 1, 2.0);
    let f2 = window_signal(&part, &tg, 3, 5.0);
    let t1 = solve_forward_modal(&sys1, &tg, &ForwardInputs { exterior: Some(&f1), ..Default::default() }).unwrap();
    let t2 = solve_forward_modal(&sys2, &tg, &ForwardInputs { exterior: Some(&f2), ..Default::default() }).unwrap();
    let weights: Vec<f64> = (0..sys1.interior_len()).map(|i| 0.1 * (i as f64).cos()).collect();
    let exact = exact_cross_integral(&sys1, &t1.track, &sys2, &t2.track, &tg, &weights);

    // independent oracle: evaluate the free evolution between samples and use Simpson
    let eval = |sys: &GalerkinSystem, tr: &ModalTrack, t: f64| -> DVector<f64> {
        let dt = tg.dt();
        let m = ((t / dt).floor() as usize).min(tg.steps() - 1);
        let tau = t - m as f64 * dt;
        let d = DVector::from_fn(sys.interior_len(), |k, _| {
            let w = sys.nu[k].sqrt();
            tr.disp[(k, m)] * (w * tau).cos() + tr.post_velocity[(k, m)] * (w * tau).sin() / w
        });
        &sys.modes * d
    };
    let sub = 64;
    let mut oracle = 0.0;
    for m in 0..tg.steps() {
        let a = m as f64 * tg.dt();
        let hh = tg.dt() / sub as f64;
        for j in 0..=sub {
            let t = a + j as f64 * hh;
            let wgt = if j == 0 || j == sub { 1.0 } else if j % 2 == 1 { 4.0 } else { 2.0 };
            // stay inside the interval on both sides of the reflection
            let t_in = t.clamp(a + 1e-15, a + tg.dt() - 1e-15);
            let v1 = eval(&sys1, &t1.track, t_in);
            let v2 = eval(&sys2, &t2.track, tg.horizon() - t_in);
            let val: f64 = (0..weights.len()).map(|i| weights[i] * v1[i] * v2[i]).sum();
            oracle += wgt * hh / 3.0 * val;
        }
    }
    assert!((exact - oracle).abs() <= 1e-9 * oracle.abs(), "{exact} vs {oracle}");
}
