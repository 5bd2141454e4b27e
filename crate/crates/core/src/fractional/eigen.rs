use super::FracLapOperator;
use crate::error::{Error, Result};
use crate::grid::DomainPartition;
use nalgebra::{DMatrix, SymmetricEigen};

/// Eigenpairs of the Dirichlet restriction `A_ΩΩ`, orthonormal in `L²(Ω)`.
#[derive(Clone, Debug)]
pub struct EigenBasis {
    /// Ascending eigenvalues.
    pub values: Vec<f64>,
    /// Columns `w_k` over `idx`, with `h Σ w_j w_k = δ_jk`.
    pub vectors: DMatrix<f64>,
    pub idx: Vec<usize>,
    pub nodes: Vec<f64>,
    pub spacing: f64,
}

const SYMMETRY_TOL: f64 = 1e-12;

/// Symmetric eigendecomposition with ascending eigenvalues and Euclidean-orthonormal columns.
pub(crate) fn sorted_eigen(m: DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let n = m.nrows();
    let eig = SymmetricEigen::new(m);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let vectors = DMatrix::from_fn(n, n, |i, j| eig.eigenvectors[(i, order[j])]);
    (values, vectors)
}

pub fn dirichlet_eigenpairs(op: &FracLapOperator, part: &DomainPartition) -> Result<EigenBasis> {
    let defect = op.symmetry_defect();
    if defect > SYMMETRY_TOL {
        return Err(Error::NonSymmetric(defect));
    }
    if part.idx_omega.is_empty() {
        return Err(Error::EmptySet("omega".into()));
    }
    let block = op.block(&part.idx_omega, &part.idx_omega);
    let (values, e) = sorted_eigen(block);
    let h = part.spacing();
    let vectors = e / h.sqrt();
    Ok(EigenBasis {
        values,
        vectors,
        idx: part.idx_omega.clone(),
        nodes: part.idx_omega.iter().map(|&i| part.grid.node(i)).collect(),
        spacing: h,
    })
}

impl EigenBasis {
    pub fn len(&self) -> usize {
        self.values.len()
    }
    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
    /// `h Wᵀ W`, the identity for an orthonormal basis.
    pub fn gram(&self) -> DMatrix<f64> {
        self.vectors.transpose() * &self.vectors * self.spacing
    }
}

/// Rows `(k, λ_k, λ_k / k^{2s})` for `k ∈ [4, K/2]` (1-based `k`).
pub fn weyl_ratio_table(basis: &EigenBasis, s: f64) -> Vec<(usize, f64, f64)> {
    let kmax = basis.len() / 2;
    (4..=kmax)
        .map(|k| {
            let lam = basis.values[k - 1];
            (k, lam, lam / (k as f64).powf(2.0 * s))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fractional::{assemble_singular_integral, assemble_spectral};
    use crate::grid::{build_grid, partition_domain, Interval};

    fn part(n: usize) -> DomainPartition {
        let g = build_grid(8.0, n, 1).unwrap();
        partition_domain(&g, Interval::new(-1.0, 1.0), Interval::new(2.0, 3.0), Interval::new(2.0, 3.0))
            .unwrap()
    }

    #[test]
    fn positive_orthonormal_ascending() {
        let p = part(256);
        let op = assemble_spectral(&p.grid, 0.5).unwrap();
        let b = dirichlet_eigenpairs(&op, &p).unwrap();
        assert!(b.values[0] > 0.0);
        assert!(b.values.windows(2).all(|w| w[0] <= w[1]));
        let g = b.gram();
        let err = (g - DMatrix::identity(b.len(), b.len())).amax();
        assert!(err <= 1e-10, "gram defect {err}");
    }

    #[test]
    fn weyl_ratios_bounded() {
        for &s in &[0.25, 0.5, 0.75] {
            let p = part(256);
            let op = assemble_spectral(&p.grid, s).unwrap();
            let b = dirichlet_eigenpairs(&op, &p).unwrap();
            let table = weyl_ratio_table(&b, s);
            let max = table.iter().map(|r| r.2).fold(f64::MIN, f64::max);
            let min = table.iter().map(|r| r.2).fold(f64::MAX, f64::min);
            assert!(max / min <= 4.0, "s={s}: {max}/{min}");
        }
    }

    #[test]
    fn low_eigenvalues_stable_under_refinement() {
        let lo = dirichlet_eigenpairs(&assemble_spectral(&part(256).grid, 0.5).unwrap(), &part(256)).unwrap();
        let hi = dirichlet_eigenpairs(&assemble_spectral(&part(512).grid, 0.5).unwrap(), &part(512)).unwrap();
        for k in 0..5 {
            let rel = (hi.values[k] / lo.values[k] - 1.0).abs();
            assert!(rel <= 0.02, "mode {k}: {rel}");
        }
    }

    #[test]
    fn rejects_asymmetric_operator() {
        let p = part(64);
        let mut op = assemble_singular_integral(&p.grid, 0.5).unwrap();
        op.matrix[(0, 1)] *= 1.01;
        assert!(matches!(dirichlet_eigenpairs(&op, &p), Err(Error::NonSymmetric(_))));
    }
}
