use serde::Serialize;

use crate::error::{domain, Result};

/// Inputs of the two-sided Gaussian density bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EnvelopeParams {
    /// Estimate of `E u(t, x)`.
    pub m: f64,
    /// Estimate of `E|u(t, x) − m|`.
    pub abs_dev: f64,
    pub gamma_low_sq: f64,
    pub gamma_high_sq: f64,
}

impl EnvelopeParams {
    pub fn new(m: f64, abs_dev: f64, gamma_low_sq: f64, gamma_high_sq: f64) -> Result<Self> {
        if !(gamma_low_sq > 0.0 && gamma_low_sq <= gamma_high_sq && gamma_high_sq.is_finite()) {
            return domain(format!("need 0 < γ_low² ≤ γ_high², got ({gamma_low_sq}, {gamma_high_sq})"));
        }
        if !(abs_dev >= 0.0 && abs_dev.is_finite() && m.is_finite()) {
            return domain(format!("need finite m and abs_dev ≥ 0, got ({m}, {abs_dev})"));
        }
        Ok(Self { m, abs_dev, gamma_low_sq, gamma_high_sq })
    }
}

/// `(lower, upper)` with
/// `lower = E|F−m| / (2γ_high²) · exp(−(z−m)² / (2γ_low²))` and
/// `upper = E|F−m| / (2γ_low²) · exp(−(z−m)² / (2γ_high²))`.
pub fn gaussian_envelope(p: &EnvelopeParams, z: f64) -> (f64, f64) {
    let d2 = (z - p.m) * (z - p.m);
    let lower = p.abs_dev / (2.0 * p.gamma_high_sq) * (-d2 / (2.0 * p.gamma_low_sq)).exp();
    let upper = p.abs_dev / (2.0 * p.gamma_low_sq) * (-d2 / (2.0 * p.gamma_high_sq)).exp();
    (lower, upper)
}
