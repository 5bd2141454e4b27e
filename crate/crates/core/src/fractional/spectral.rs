use super::{check_order, circulant, FracLapOperator, Provenance};
use crate::error::Result;
use crate::grid::Grid;
use rustfft::{num_complex::Complex64, FftPlanner};

/// Circulant matrix of the discrete Fourier multiplier `|ξ_k|^{2s}`.
pub fn assemble_spectral(grid: &Grid, s: f64) -> Result<FracLapOperator> {
    check_order(s)?;
    let n = grid.len();
    let mut buf: Vec<Complex64> = (0..n)
        .map(|k| Complex64::new(grid.wavenumber(k).abs().powf(2.0 * s), 0.0))
        .collect();
    FftPlanner::new().plan_fft_inverse(n).process(&mut buf);
    let row: Vec<f64> = buf.iter().map(|c| c.re / n as f64).collect();
    Ok(FracLapOperator {
        s,
        matrix: circulant(&row),
        provenance: Provenance::Spectral,
        grid: grid.clone(),
    })
}
