use super::*;
use crate::error::Error;
use crate::fit::fit_line;
use crate::forward::{GalerkinSystem, Potential};
use crate::fractional::{assemble_singular_integral, FracLapOperator};
use crate::grid::{build_grid, make_time_window, partition_domain, DomainPartition, Interval, TimeGrid, WindowShape};
use crate::par::Exec;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn lab() -> (FracLapOperator, DomainPartition, TimeGrid) {
    let g = build_grid(4.0, 256, 1).unwrap();
    let part = partition_domain(&g, Interval::new(-1.0, 1.0), Interval::new(2.0, 3.0), Interval::new(2.0, 3.0)).unwrap();
    let tg = TimeGrid::new(2.0, 256).unwrap();
    (assemble_singular_integral(&g, 0.5).unwrap(), part, tg)
}

#[test]
fn basis_single_vector() {
    let b = gram_schmidt_weighted(1, 0.5, 400).unwrap();
    let ip: f64 = (0..b.nodes.len()).map(|i| b.weights[i] * b.y[(0, i)].powi(2)).sum();
    assert!((ip - 1.0).abs() <= 1e-10);
}

#[test]
fn basis_invariants() {
    let b = gram_schmidt_weighted(2, 0.5, 400).unwrap();
    assert!(b.moment(1, 0).abs() <= 1e-10);
    for s in [0.25, 0.5, 0.75] {
        let b = gram_schmidt_weighted(12, s, 400).unwrap();
        assert!(b.gram_defect <= 1e-10, "gram {}", b.gram_defect);
        assert!(b.moment_defect <= 1e-9, "moments {}", b.moment_defect);
        assert!(b.moment(2, 0).abs() <= 0.5);
        assert!(b.envelope_excess(40) <= 1e-9);
    }
    let b = gram_schmidt_weighted(MAX_K, 0.5, 600).unwrap();
    assert!(b.dictionary_condition < 1e12);
}

#[test]
fn basis_rejects_bad_input() {
    assert!(gram_schmidt_weighted(0, 0.5, 400).is_err());
    assert!(gram_schmidt_weighted(MAX_K + 1, 0.5, 400).is_err());
    assert!(gram_schmidt_weighted(4, 0.5, 100).is_err());
    // fewer distinct samples than dictionary functions: singular Gram matrix
    let r = basis::orthonormalize(6, 0.5, vec![2.2, 2.5, 2.8], vec![0.3; 3]);
    assert!(matches!(r, Err(Error::Conditioning(_))));
}

#[test]
fn monomial_coefficients_reproduce_h() {
    let b = gram_schmidt_weighted(8, 0.5, 400).unwrap();
    for k in 0..8 {
        for r in [2.1f64, 2.5, 2.9] {
            let mono: f64 = (0..8).map(|j| b.monomial[(k, j)] * r.powi(-(j as i32))).sum();
            let direct = b.h(k, r);
            assert!((mono - direct).abs() <= 1e-6 * direct.abs().max(1.0), "k {k} r {r}: {mono} vs {direct}");
        }
    }
    let mut buf = Vec::new();
    b.write_dump(&mut buf).unwrap();
    assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 10);
}

#[test]
fn exterior_harmonics() {
    let b = gram_schmidt_weighted(12, 0.5, 400).unwrap();
    let e0 = poisson_extend_1d(&b, 0, Normalization::Unit, 200).unwrap();
    assert!(e0.values.iter().all(|v| *v > 0.0) || e0.values.iter().all(|v| *v < 0.0));
    for k in 0..12 {
        let direct = poisson_value(&b, k, 0.5, Normalization::Unit).unwrap();
        let series = poisson_series(&b, k, 0.5, 60, Normalization::Unit);
        assert!((direct - series).abs() <= 1e-8, "k {k}: {direct} vs {series}");
    }
    let ks: Vec<f64> = (1..=10).map(|k| k as f64).collect();
    let logs: Vec<f64> = (1..=10)
        .map(|k| poisson_extend_1d(&b, k, Normalization::Unit, 200).unwrap().l2_norm.log2())
        .collect();
    let fit = fit_line(&ks, &logs).unwrap();
    assert!(fit.slope <= -0.85, "slope {}", fit.slope);
    let scaled = poisson_extend_1d(&b, 3, Normalization::Fixed(-2.0), 200).unwrap();
    let unit = poisson_extend_1d(&b, 3, Normalization::Unit, 200).unwrap();
    assert!((scaled.l2_norm - 2.0 * unit.l2_norm).abs() <= 1e-12 * unit.l2_norm);
    assert!(poisson_extend_1d(&b, 12, Normalization::Unit, 200).is_err());
}

#[test]
fn grid_basis_is_discretely_orthonormal() {
    let (_, part, _) = lab();
    let b = gram_schmidt_on_grid(8, 0.5, &part).unwrap();
    let h = part.spacing();
    for a in 0..8 {
        let ya = pasted_basis(&part, &b, a);
        for c in 0..8 {
            let yc = pasted_basis(&part, &b, c);
            let ip: f64 = ya.iter().zip(&yc).map(|(x, y)| h * x * y).sum();
            assert!((ip - if a == c { 1.0 } else { 0.0 }).abs() <= 1e-10);
        }
    }
    assert!(b.moment_defect <= 1e-9);
}

#[test]
fn windowed_solutions() {
    let (op, part, tg) = lab();
    let b = gram_schmidt_on_grid(8, 0.5, &part).unwrap();
    let win = make_time_window(&tg, WindowShape::SineSquared, (0.1, 1.9)).unwrap();
    let q = Potential::bump(&part, 0.0, 1.0, 1.0);
    let sys = GalerkinSystem::new(&op, &part, &q).unwrap();
    let zero = windowed_solution_with(&sys, &tg, &win, &vec![0.0; part.idx_w1.len()]).unwrap();
    assert_eq!(zero.field.values.amax(), 0.0);

    let mut doubled = win.clone();
    doubled.values.iter_mut().for_each(|v| *v *= 2.0);
    let u1 = windowed_solution(&sys, &tg, &win, 2, &b).unwrap();
    let u2 = windowed_solution(&sys, &tg, &doubled, 2, &b).unwrap();
    assert_eq!(u2.field.values, &u1.field.values * 2.0);

    let ks: Vec<f64> = (0..8).map(|k| k as f64).collect();
    let logs: Vec<f64> = (0..8).map(|k| windowed_solution(&sys, &tg, &win, k, &b).unwrap().sup_l2.ln()).collect();
    let fit = fit_line(&ks, &logs).unwrap();
    assert!(fit.slope <= -0.3, "slope {}", fit.slope);

    let neg = Potential::from_fn(&part, |x| -0.1 * (1.0 - x * x));
    let sys = GalerkinSystem::new(&op, &part, &neg).unwrap();
    assert!(windowed_solution(&sys, &tg, &win, 0, &b).is_err());
}

#[test]
fn gamma_tensor_properties() {
    let (op, part, tg) = lab();
    let b = gram_schmidt_on_grid(8, 0.5, &part).unwrap();
    let win = make_time_window(&tg, WindowShape::SineSquared, (0.1, 1.9)).unwrap();
    let ctx = GammaContext::new(&op, &part, &tg, &win, &b, 8).unwrap();
    let zero = ctx.gamma_tensor(&Potential::zero(&part), Exec::Parallel).unwrap();
    assert!(zero.max_abs() <= 1e-10);

    let q = Potential::bump(&part, 0.0, 1.0, 0.5);
    let g = ctx.gamma_tensor(&q, Exec::Parallel).unwrap();
    assert!(g.symmetry_residual() <= 1e-6, "symmetry {}", g.symmetry_residual());
    assert_eq!(g, ctx.gamma_tensor(&q, Exec::Sequential).unwrap());

    let env = g.envelope();
    let xs: Vec<f64> = (0..8).map(|k| k as f64).collect();
    let fit = fit_line(&xs, &env.iter().map(|v| v.ln()).collect::<Vec<_>>()).unwrap();
    assert!(fit.slope <= -0.3 && fit.r2 >= 0.9, "{fit:?}");

    let mut buf = Vec::new();
    g.write_gamma1(&mut buf).unwrap();
    assert_eq!(buf.len(), 6 + 24 + 8 * 8 * 8 * tg.samples());
    let back = GammaTensor::read_gamma1(&buf[..]).unwrap();
    assert_eq!(back.entries, g.entries);
    assert!(GammaTensor::read_gamma1(&buf[2..]).is_err());
}

#[test]
fn tensor_norms() {
    let mut a = DMatrix::zeros(4, 4);
    assert_eq!(x_prime_norm(&a), 0.0);
    a[(1, 2)] = -0.5;
    assert_eq!(x_prime_norm(&a), 27.0 * 0.5);
    let idx = harmonic_indices(1, 3).unwrap();
    assert_eq!(x_norm(&a, &idx, 1), x_prime_norm(&a));

    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..20 {
        let k = 12;
        let rate: f64 = rng.gen_range(0.2..1.5);
        let a = DMatrix::from_fn(k, k, |i, j| rng.gen_range(-1.0..1.0) * (-rate * i.max(j) as f64).exp());
        assert!(operator_norm(&a) <= 2.0 * x_prime_norm(&a));
        let idx = harmonic_indices(2, 5).unwrap();
        let n = idx.len();
        let t = DMatrix::from_fn(n, n, |r, c| {
            rng.gen_range(-1.0..1.0) * (-rate * idx[r].level().max(idx[c].level()) as f64).exp()
        });
        assert!(operator_norm(&t) <= 4.0 * x_norm(&t, &idx, 2));
    }
}

fn binomial_f(n: i64, k: i64) -> f64 {
    if n < 0 || k < 0 || k > n {
        return 0.0;
    }
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

#[test]
fn harmonic_counts() {
    for m in 0..=10 {
        assert_eq!(ell_m(3, m).unwrap(), 2 * m as u64 + 1);
    }
    assert_eq!(ell_m(2, 0).unwrap(), 1);
    assert_eq!(ell_m(2, 3).unwrap(), 2);
    for n in [4usize, 5, 6] {
        for m in 0..8 {
            let direct = binomial_f((m + n - 1) as i64, n as i64 - 1) - binomial_f(m as i64 + n as i64 - 3, n as i64 - 1);
            assert_eq!(ell_m(n, m).unwrap() as f64, direct);
        }
    }
    assert!(ell_m(1, 2).is_err());
}

/// Enumerate every pair of indices with `max(level) = σ`.
fn brute_force_tuples(n: usize, sigma: usize) -> u64 {
    let idx = harmonic_indices(n, sigma).unwrap();
    let mut count = 0;
    for a in &idx {
        for b in &idx {
            if a.level().max(b.level()) == sigma {
                count += 1;
            }
        }
    }
    count
}

fn inputs(n: usize, delta: f64, c_small: f64) -> NetInputs {
    NetInputs { n, s: 0.5, delta, r: 1.0, t: 2.0, chi_norm: 1.0, c_prime_big: 1.0, c_prime_small: c_small }
}

#[test]
fn net_budget() {
    let b = delta_net_budget(inputs(1, 1.0 - 1e-9, 4.0)).unwrap();
    assert_eq!(b.sigma_star, 0);
    assert!(b.sigma_tilde < 1e-6);
    assert_eq!(b.n_star_bound, 8.0);
    assert_eq!(b.n_star, 1);

    let mut last = (0.0, 0.0);
    for delta in [1e-2, 1e-4, 1e-6, 1e-8] {
        let b = delta_net_budget(inputs(1, delta, 1.0)).unwrap();
        assert!(b.residual <= 1e-10);
        assert!(b.chain().iter().all(|(_, ok)| *ok), "{:?}", b.chain());
        assert!(b.sigma_tilde > last.0 && b.log_y > last.1);
        last = (b.sigma_tilde, b.log_y);
    }

    for n in 1..=3 {
        for sigma in 0..=4 {
            assert_eq!(tuple_count(n, sigma).unwrap(), brute_force_tuples(n, sigma), "n {n} sigma {sigma}");
        }
    }
    // n = 1, σ* = 2: 1 + 3 + 5 pairs, under the bound 8(1 + 2)
    let n_star: u64 = (0..=2).map(|s| tuple_count(1, s).unwrap()).sum();
    assert_eq!(n_star, 9);
    assert!(n_star as f64 <= 24.0);

    assert!(delta_net_budget(inputs(1, 1.5, 1.0)).is_err());
    assert!(delta_net_budget(inputs(1, 0.0, 1.0)).is_err());
}

#[test]
fn mandache_families() {
    let (_, part, _) = lab();
    let c = packing_constant(1.0);
    let beta = c * 0.05 / 0.2;
    let fam = mandache_family(0.05, beta, 1.0, 0.8, &part).unwrap();
    assert_eq!(fam.len(), 1 << fam.bumps());
    assert!(fam.min_pairwise_separation() >= 0.05);
    for (i, q) in fam.members.iter().enumerate() {
        assert!(q.values().iter().all(|v| *v >= 0.0 && *v <= 0.05));
        for (a, &node) in part.idx_omega.iter().enumerate() {
            if part.grid.node(node).abs() >= 0.8 {
                assert_eq!(q.values()[a], 0.0);
            }
        }
        if i % 17 == 0 || i + 1 == fam.len() {
            assert!(fam.holder_quotient(i, &[fam.width, 0.5 * fam.width]) <= beta);
        }
    }
    let m1 = mandache_family(0.05, 0.5 * beta, 1.0, 0.8, &part).unwrap().bumps() as i64;
    let m2 = mandache_family(0.05, beta, 1.0, 0.8, &part).unwrap().bumps() as i64;
    assert!((m2 - 2 * m1).abs() <= 1, "{m1} -> {m2}");
    assert!(matches!(
        mandache_family(0.01, beta, 1.0, 0.8, &part),
        Err(Error::Resolution { .. })
    ));
    // α = 1/2 with width 0.4 at ε = 0.1
    let beta_half = packing_constant(0.5) * 0.1 / 0.4f64.sqrt();
    let half = mandache_family(0.1, beta_half, 0.5, 0.8, &part).unwrap();
    assert!(half.holder_quotient(half.len() - 1, &[half.width, 0.5 * half.width]) <= beta_half);
}

#[test]
fn experiment_on_duplicates_and_sweep() {
    let (op, part, tg) = lab();
    let b = gram_schmidt_on_grid(8, 0.5, &part).unwrap();
    let windows = [
        (WindowShape::SineSquared, (0.1, 1.9)),
        (WindowShape::Bump, (0.2, 1.8)),
        (WindowShape::SineSquared, (0.5, 1.5)),
    ];
    let ctxs: Vec<GammaContext> = windows
        .iter()
        .map(|(s, sup)| GammaContext::new(&op, &part, &tg, &make_time_window(&tg, *s, *sup).unwrap(), &b, 8).unwrap())
        .collect();
    let beta = packing_constant(1.0) * 0.05 / 0.2;
    let mut dup = mandache_family(0.2, beta, 1.0, 0.8, &part).unwrap();
    dup.members = vec![dup.members[1].clone(), dup.members[1].clone()];
    dup.patterns = vec![1, 1];
    let row = instability_experiment(&dup, &ctxs, Exec::Parallel).unwrap();
    assert_eq!(row.gap_x_prime, 0.0);
    assert_eq!(row.gap_windowed, 0.0);

    let fams: Vec<DiscreteFamily> =
        [0.2, 0.1].iter().map(|&e| mandache_family(e, beta, 1.0, 0.8, &part).unwrap()).collect();
    let rep = instability_sweep(&fams, &ctxs, Exec::Parallel).unwrap();
    assert!(rep.monotone);
    for (r, f) in rep.rows.iter().zip(&fams) {
        assert!(r.separation >= f.epsilon);
        assert!(r.min_separation >= f.epsilon);
    }
    assert!(rep.fit.unwrap().slope < 0.0);
    assert!(rep.summary().contains("monotone=true"));
}
