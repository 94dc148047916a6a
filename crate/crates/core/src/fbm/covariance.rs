use nalgebra::DMatrix;

use super::TimeGrid;
use crate::error::{domain, Result};

pub fn validate_hurst(h: f64) -> Result<()> {
    if h > 0.0 && h < 1.0 {
        Ok(())
    } else {
        domain(format!("Hurst index must lie in (0, 1), got {h}"))
    }
}

/// fBm covariance `R_H(t, s) = ½(t^{2H} + s^{2H} − |t − s|^{2H})`.
pub fn covariance(t: f64, s: f64, h: f64) -> Result<f64> {
    validate_hurst(h)?;
    if !(t >= 0.0 && s >= 0.0) {
        return domain(format!("covariance needs t, s >= 0, got ({t}, {s})"));
    }
    Ok(raw_covariance(t, s, h))
}

#[inline]
pub(crate) fn raw_covariance(t: f64, s: f64, h: f64) -> f64 {
    let a = 2.0 * h;
    0.5 * (t.powf(a) + s.powf(a) - (t - s).abs().powf(a))
}

/// Autocovariance of unit-step fractional Gaussian noise at lag `k`:
/// `½(|k+1|^{2H} − 2|k|^{2H} + |k−1|^{2H})`.
pub fn fgn_autocovariance(k: usize, h: f64) -> f64 {
    let a = 2.0 * h;
    let k = k as f64;
    0.5 * ((k + 1.0).powf(a) - 2.0 * k.powf(a) + (k - 1.0).abs().powf(a))
}

/// Gram matrix of the grid nodes `t_1..t_n` (the origin is excluded since
/// `B_0 = 0`).
pub fn gram_matrix(grid: &TimeGrid, h: f64) -> Result<DMatrix<f64>> {
    validate_hurst(h)?;
    let nodes = grid.nodes();
    let n = grid.n_steps();
    Ok(DMatrix::from_fn(n, n, |j, k| raw_covariance(nodes[j + 1], nodes[k + 1], h)))
}
