//! Discrete fractional Laplacian on the periodic grid.

mod eigen;
mod extension;
mod norms;
mod singular;
mod spectral;

pub use eigen::{dirichlet_eigenpairs, weyl_ratio_table, EigenBasis};
pub(crate) use eigen::sorted_eigen as eigen_sorted;
pub use extension::{cs_extend, trace_constant, CsExtensionField};
pub use norms::{hls_probe, hls_ratio, negative_norm_on_set, smooth_random_field, sobolev_norm, symmetric_function};
pub use singular::{assemble_singular_integral, exact_constant, singular_calibration};
pub use spectral::assemble_spectral;

use crate::error::{Error, Result};
use crate::grid::Grid;
use nalgebra::DMatrix;
use std::io::{Read, Write};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Provenance {
    Spectral,
    SingularIntegral,
}

impl Provenance {
    fn tag(self) -> u8 {
        match self {
            Provenance::Spectral => 0,
            Provenance::SingularIntegral => 1,
        }
    }
    fn from_tag(t: u8) -> Result<Self> {
        match t {
            0 => Ok(Provenance::Spectral),
            1 => Ok(Provenance::SingularIntegral),
            _ => Err(Error::Format(format!("unknown provenance tag {t}"))),
        }
    }
    pub fn name(self) -> &'static str {
        match self {
            Provenance::Spectral => "spectral",
            Provenance::SingularIntegral => "singular-integral",
        }
    }
}

/// Dense symmetric matrix realizing `(-Δ)^s` on a periodic grid.
#[derive(Clone, Debug)]
pub struct FracLapOperator {
    s: f64,
    matrix: DMatrix<f64>,
    provenance: Provenance,
    grid: Grid,
}

pub(crate) fn check_order(s: f64) -> Result<()> {
    if s > 0.0 && s < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("order s = {s} must lie in (0, 1)")))
    }
}

/// Circulant matrix from the first row, symmetrized so that `A = Aᵀ` bitwise.
pub(crate) fn circulant(row: &[f64]) -> DMatrix<f64> {
    let n = row.len();
    let sym: Vec<f64> = (0..n).map(|d| 0.5 * (row[d] + row[(n - d) % n])).collect();
    DMatrix::from_fn(n, n, |i, j| sym[(j + n - i) % n])
}

impl FracLapOperator {
    pub fn s(&self) -> f64 {
        self.s
    }
    pub fn provenance(&self) -> Provenance {
        self.provenance
    }
    pub fn grid(&self) -> &Grid {
        &self.grid
    }
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }
    pub fn apply(&self, u: &[f64]) -> Vec<f64> {
        let n = self.grid.len();
        assert_eq!(u.len(), n, "field length must match the grid");
        (0..n)
            .map(|i| {
                let row = self.matrix.row(i);
                (0..n).map(|j| row[j] * u[j]).sum()
            })
            .collect()
    }
    /// Sub-block `A[rows, cols]`.
    pub fn block(&self, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
        DMatrix::from_fn(rows.len(), cols.len(), |a, b| self.matrix[(rows[a], cols[b])])
    }
    /// Relative symmetry defect `max|A - Aᵀ| / max|A|`.
    pub fn symmetry_defect(&self) -> f64 {
        let scale = self.matrix.amax().max(f64::MIN_POSITIVE);
        (&self.matrix - self.matrix.transpose()).amax() / scale
    }

    /// Serialize in the FRAC1 layout (little-endian).
    pub fn write_frac1<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(b"FRAC1")?;
        w.write_all(&[self.provenance.tag()])?;
        w.write_all(&self.s.to_le_bytes())?;
        w.write_all(&(self.grid.len() as u64).to_le_bytes())?;
        w.write_all(&self.grid.half_width().to_le_bytes())?;
        let n = self.grid.len();
        for i in 0..n {
            for j in 0..n {
                w.write_all(&self.matrix[(i, j)].to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn to_frac1_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_frac1(&mut buf).expect("writing to a Vec cannot fail");
        buf
    }

    pub fn read_frac1<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 5];
        r.read_exact(&mut magic)?;
        if &magic != b"FRAC1" {
            return Err(Error::Format("bad FRAC1 magic".into()));
        }
        let mut tag = [0u8; 1];
        r.read_exact(&mut tag)?;
        let provenance = Provenance::from_tag(tag[0])?;
        let s = read_f64(&mut r)?;
        let n = read_u64(&mut r)? as usize;
        let l = read_f64(&mut r)?;
        let grid = crate::grid::build_grid(l, n, 1)?;
        let mut data = vec![0.0; n * n];
        for v in data.iter_mut() {
            *v = read_f64(&mut r)?;
        }
        let matrix = DMatrix::from_row_slice(n, n, &data);
        Ok(FracLapOperator { s, matrix, provenance, grid })
    }
}

pub fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

pub fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::build_grid;

    #[test]
    fn frac1_round_trip() {
        let g = build_grid(8.0, 16, 1).unwrap();
        let op = assemble_spectral(&g, 0.3).unwrap();
        let bytes = op.to_frac1_bytes();
        assert_eq!(bytes.len(), 5 + 1 + 8 + 8 + 8 + 16 * 16 * 8);
        let back = FracLapOperator::read_frac1(&bytes[..]).unwrap();
        assert_eq!(back.matrix(), op.matrix());
        assert_eq!(back.s(), 0.3);
        assert_eq!(back.provenance(), Provenance::Spectral);
        assert!(FracLapOperator::read_frac1(&bytes[1..]).is_err());
    }
}
