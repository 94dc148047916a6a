use serde::Serialize;

use crate::error::{Error, Result};
use crate::quadrature::trapezoid;

/// ε-regularised symmetric integrals at `ε, ε/2, ε/4` and their Richardson limit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SymmetricIntegral {
    pub epsilon: f64,
    pub raw: [f64; 3],
    pub extrapolated: f64,
}

fn steps_of(epsilon: f64, dt: f64) -> Result<usize> {
    let m = (epsilon / dt).round();
    if !(epsilon > 0.0) || m < 1.0 || (m * dt - epsilon).abs() > 1e-9 * dt {
        return Err(Error::GridAlignment { epsilon, dt });
    }
    Ok(m as usize)
}

/// `∫_0^t Y_s (X_{s+ε} − X_{s−ε}) / 2ε ds` by the trapezoid rule on the grid,
/// with `X` held constant outside `[0, t]`.
pub fn symmetric_integral_at(y: &[f64], x: &[f64], dt: f64, epsilon: f64) -> Result<f64> {
    if y.len() != x.len() || y.is_empty() {
        return Err(Error::GridMismatch(format!("integrand has {} nodes, integrator {}", y.len(), x.len())));
    }
    let m = steps_of(epsilon, dt)?;
    let n = x.len() - 1;
    let values: Vec<f64> = (0..=n)
        .map(|k| y[k] * (x[(k + m).min(n)] - x[k.saturating_sub(m)]) / (2.0 * epsilon))
        .collect();
    Ok(trapezoid(&values, dt))
}

/// Evaluates at `ε, ε/2, ε/4` (so `ε/Δt` must be a multiple of 4) and
/// extrapolates with `(I(ε) − 6 I(ε/2) + 8 I(ε/4)) / 3`, which cancels the
/// `O(ε)` and `O(ε²)` terms.
pub fn symmetric_integral(y: &[f64], x: &[f64], dt: f64, epsilon: f64) -> Result<SymmetricIntegral> {
    let m = steps_of(epsilon, dt)?;
    if m % 4 != 0 {
        return Err(Error::GridAlignment { epsilon: epsilon / 4.0, dt });
    }
    let raw = [
        symmetric_integral_at(y, x, dt, epsilon)?,
        symmetric_integral_at(y, x, dt, epsilon / 2.0)?,
        symmetric_integral_at(y, x, dt, epsilon / 4.0)?,
    ];
    Ok(SymmetricIntegral { epsilon, raw, extrapolated: (raw[0] - 6.0 * raw[1] + 8.0 * raw[2]) / 3.0 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fbm::{sample_fbm, Method, TimeGrid};
    use crate::rng::StreamSeed;

    #[test]
    fn alignment_is_enforced() {
        let x = vec![0.0; 17];
        assert!(matches!(symmetric_integral_at(&x, &x, 0.1, 0.15), Err(Error::GridAlignment { .. })));
        assert!(matches!(symmetric_integral(&x, &x, 0.1, 0.2), Err(Error::GridAlignment { .. })));
        assert!(symmetric_integral(&x, &x, 0.1, 0.4).is_ok());
        assert!(symmetric_integral_at(&x, &x[1..], 0.1, 0.1).is_err());
    }

    #[test]
    fn smooth_integrands_extrapolate_to_the_exact_value() {
        // ∫_0^1 cos s d(sin s) = ∫ cos² = 1/2 + sin 2 / 4
        let n = 4096;
        let dt = 1.0 / n as f64;
        let s: Vec<f64> = (0..=n).map(|k| k as f64 * dt).collect();
        let y: Vec<f64> = s.iter().map(|v| v.cos()).collect();
        let x: Vec<f64> = s.iter().map(|v| v.sin()).collect();
        let r = symmetric_integral(&y, &x, dt, 16.0 * dt).unwrap();
        let exact = 0.5 + 2.0f64.sin() / 4.0;
        assert!((r.raw[0] - exact).abs() > 1e-4);
        assert!((r.extrapolated - exact).abs() < 1e-6, "{r:?}");
    }

    #[test]
    fn constant_integrand_telescopes() {
        let grid = TimeGrid::new(1.0, 4096).unwrap();
        let p = sample_fbm(&grid, 0.75, StreamSeed::path(1, 0), Method::Circulant).unwrap();
        let x = p.values();
        let ones = vec![1.0; x.len()];
        let r = symmetric_integral(&ones, x, grid.dt(), 4.0 * grid.dt()).unwrap();
        let want = x[4096] - x[0];
        assert!((r.extrapolated - want).abs() < 2e-2 * (1.0 + want.abs()), "{r:?} vs {want}");
    }

    #[test]
    fn stratonovich_identity_for_smooth_driver() {
        let n = 1024;
        let dt = 1.0 / n as f64;
        let x: Vec<f64> = (0..=n).map(|k| (3.0 * k as f64 * dt).sin() + k as f64 * dt).collect();
        let r = symmetric_integral(&x, &x, dt, 8.0 * dt).unwrap();
        let want = 0.5 * (x[n] * x[n] - x[0] * x[0]);
        assert!((r.extrapolated - want).abs() < 1e-6);
    }
}
