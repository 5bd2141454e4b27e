use super::{eigen::sorted_eigen, EigenBasis, FracLapOperator};
use crate::grid::Grid;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rustfft::{num_complex::Complex64, FftPlanner};

/// `f(M)` for a symmetric matrix `M`, through its eigendecomposition.
pub fn symmetric_function(m: &DMatrix<f64>, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
    let (values, e) = sorted_eigen(m.clone());
    let scaled = DMatrix::from_fn(e.nrows(), e.ncols(), |i, j| e[(i, j)] * f(values[j]));
    scaled * e.transpose()
}

/// `‖F⁻¹ ⟨ξ⟩^a F u‖` in the `h`-weighted ℓ² sense.
pub fn sobolev_norm(grid: &Grid, field: &[f64], a: f64) -> f64 {
    let n = grid.len();
    assert_eq!(field.len(), n, "field length must match the grid");
    let mut buf: Vec<Complex64> = field.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let total: f64 = buf
        .iter()
        .enumerate()
        .map(|(k, c)| {
            let xi = grid.wavenumber(k);
            (1.0 + xi * xi).powf(a) * c.norm_sqr()
        })
        .sum();
    (grid.spacing() * total / n as f64).sqrt()
}

/// `‖(I + A_WW)^{-1/2} g‖` with `g` given on the nodes `idx`.
pub fn negative_norm_on_set(g: &[f64], idx: &[usize], op: &FracLapOperator) -> f64 {
    assert_eq!(g.len(), idx.len(), "g must be sampled on idx");
    let a = op.block(idx, idx);
    let (values, e) = sorted_eigen(a);
    let coeffs = e.transpose() * DVector::from_column_slice(g);
    let h = op.grid().spacing();
    let total: f64 = coeffs.iter().zip(&values).map(|(c, v)| c * c / (1.0 + v)).sum();
    (h * total).sqrt()
}

/// `‖v‖_{L²(Ω)} / ‖A^{1/2} v‖`, with `v` given on the Ω nodes of `basis`.
pub fn hls_ratio(basis: &EigenBasis, op: &FracLapOperator, v: &[f64]) -> f64 {
    let a = op.block(&basis.idx, &basis.idx);
    let vv = DVector::from_column_slice(v);
    let num = basis.spacing * vv.dot(&vv);
    let den = basis.spacing * vv.dot(&(a * &vv));
    (num / den).sqrt()
}

/// Random field on Ω built from the first eight sine modes of the interval,
/// so that it samples the same continuum function on every grid.
pub fn smooth_random_field<R: Rng>(nodes: &[f64], a: f64, b: f64, rng: &mut R) -> Vec<f64> {
    let coeffs: Vec<f64> = (1..=8).map(|k| rng.gen_range(-1.0..1.0) / k as f64).collect();
    nodes
        .iter()
        .map(|&x| {
            let z = (x - a) / (b - a);
            coeffs
                .iter()
                .enumerate()
                .map(|(k, c)| c * ((k + 1) as f64 * std::f64::consts::PI * z).sin())
                .sum()
        })
        .collect()
}

/// Largest ratio `‖v‖ / ‖A^{1/2}v‖` over `trials` random smooth Ω fields.
pub fn hls_probe<R: Rng>(
    basis: &EigenBasis,
    op: &FracLapOperator,
    omega: (f64, f64),
    trials: usize,
    rng: &mut R,
) -> f64 {
    assert!(trials >= 1, "need at least one trial");
    (0..trials)
        .map(|_| {
            let v = smooth_random_field(&basis.nodes, omega.0, omega.1, rng);
            hls_ratio(basis, op, &v)
        })
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fractional::{assemble_spectral, dirichlet_eigenpairs};
    use crate::grid::{build_grid, partition_domain, DomainPartition, Interval};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn part(n: usize) -> DomainPartition {
        let g = build_grid(8.0, n, 1).unwrap();
        partition_domain(&g, Interval::new(-1.0, 1.0), Interval::new(2.0, 3.0), Interval::new(2.0, 3.0))
            .unwrap()
    }

    #[test]
    fn sobolev_examples() {
        let g = build_grid(8.0, 128, 1).unwrap();
        let u: Vec<f64> = g.nodes().iter().map(|x| (-x * x).exp() * (3.0 * x).sin()).collect();
        let l2 = (g.spacing() * u.iter().map(|v| v * v).sum::<f64>()).sqrt();
        assert!((sobolev_norm(&g, &u, 0.0) - l2).abs() <= 1e-13 * l2);
        let xi0 = g.wavenumber(5);
        let m: Vec<f64> = g.nodes().iter().map(|x| (xi0 * x).cos()).collect();
        let l2m = (g.spacing() * m.iter().map(|v| v * v).sum::<f64>()).sqrt();
        let want = (1.0 + xi0 * xi0).powf(0.35 / 2.0) * l2m;
        assert!((sobolev_norm(&g, &m, 0.35) - want).abs() <= 1e-12 * want);
    }

    #[test]
    fn negative_norm_examples() {
        let p = part(128);
        let op = assemble_spectral(&p.grid, 0.5).unwrap();
        let idx = &p.idx_w1;
        let a = op.block(idx, idx);
        let (values, e) = sorted_eigen(a.clone());
        let h = p.spacing();
        let g: Vec<f64> = e.column(2).iter().copied().collect();
        let l2 = (h * g.iter().map(|v| v * v).sum::<f64>()).sqrt();
        let want = (1.0 + values[2]).powf(-0.5) * l2;
        assert!((negative_norm_on_set(&g, idx, &op) - want).abs() <= 1e-12 * want);

        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let id = DMatrix::<f64>::identity(idx.len(), idx.len());
        let half = symmetric_function(&(&id + &a), |x| x.sqrt());
        let inv = (&id + &a).try_inverse().unwrap();
        for _ in 0..20 {
            let g: Vec<f64> = (0..idx.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let gv = DVector::from_column_slice(&g);
            let norm = negative_norm_on_set(&g, idx, &op);
            assert!(norm <= (h * gv.dot(&gv)).sqrt());
            let phi = DVector::from_fn(idx.len(), |_, _| rng.gen_range(-1.0..1.0));
            let pairing = h * gv.dot(&phi);
            let dual = (h * (&half * &phi).norm_squared()).sqrt();
            assert!(pairing.abs() <= norm * dual * (1.0 + 1e-12));
            let opt = &inv * &gv;
            let pairing = h * gv.dot(&opt);
            let dual = (h * (&half * &opt).norm_squared()).sqrt();
            assert!((pairing - norm * dual).abs() <= 1e-10 * pairing);
        }
    }

    #[test]
    fn hls_bounds_and_refinement() {
        let mut ratios = Vec::new();
        for n in [128, 256] {
            let p = part(n);
            let op = assemble_spectral(&p.grid, 0.5).unwrap();
            let b = dirichlet_eigenpairs(&op, &p).unwrap();
            let low: Vec<f64> = b.vectors.column(0).iter().copied().collect();
            let bound = b.values[0].powf(-0.5);
            assert!((hls_ratio(&b, &op, &low) - bound).abs() <= 1e-10 * bound);
            let mut rng = ChaCha8Rng::seed_from_u64(11);
            let r = hls_probe(&b, &op, (-1.0, 1.0), 200, &mut rng);
            assert!(r.is_finite() && r <= bound * (1.0 + 1e-12));
            ratios.push(r);
        }
        assert!((ratios[1] / ratios[0] - 1.0).abs() <= 0.2, "{ratios:?}");
    }
}
