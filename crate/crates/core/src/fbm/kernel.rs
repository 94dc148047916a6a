use libm::lgamma as ln_gamma;

use super::validate_hurst;
use crate::error::{domain, Error, Result};
use crate::quadrature::CompositeGauss;

/// Normalisation `c_H = (H(2H−1)/β(2−2H, H−½))^{½}` of the Volterra kernel
/// for `H > ½`.
pub fn kernel_normalization(h: f64) -> Result<f64> {
    validate_hurst(h)?;
    if h <= 0.5 {
        return Err(Error::Unsupported(format!("kernel normalisation needs H > 1/2, got {h}")));
    }
    let ln_beta = ln_gamma(2.0 - 2.0 * h) + ln_gamma(h - 0.5) - ln_gamma(1.5 - h);
    Ok((h * (2.0 * h - 1.0) * (-ln_beta).exp()).sqrt())
}

/// Volterra kernel `K_H(t, s)` with `B^H_t = ∫_0^t K_H(t, s) dW_s`.
///
/// Only `H ≥ ½` is supported: `K ≡ 1` for `H = ½` and, for `H > ½`,
/// `c_H s^{½−H} ∫_s^t (u−s)^{H−3/2} u^{H−½} du`. The substitution
/// `v = (u−s)^{H−½}` removes the endpoint singularity, leaving
/// `(1/p) ∫_0^{(t−s)^p} (s + v^{1/p})^p dv` with `p = H − ½`.
pub fn kernel_k(t: f64, s: f64, h: f64) -> Result<f64> {
    validate_hurst(h)?;
    if !(s > 0.0 && s < t) {
        return domain(format!("kernel needs 0 < s < t, got s = {s}, t = {t}"));
    }
    if h == 0.5 {
        return Ok(1.0);
    }
    if h < 0.5 {
        return Err(Error::Unsupported(format!(
            "Volterra kernel for H < 1/2 depends on an unspecified normalisation (H = {h})"
        )));
    }
    let c = kernel_normalization(h)?;
    Ok(c * s.powf(0.5 - h) * kernel_integral(t, s, h))
}

/// `∫_s^t (u−s)^{H−3/2} u^{H−½} du` for `H > ½`.
pub(crate) fn kernel_integral(t: f64, s: f64, h: f64) -> f64 {
    thread_local! {
        static RULE: CompositeGauss = CompositeGauss::new(12, 16);
    }
    let p = h - 0.5;
    let upper = (t - s).powf(p);
    let inv_p = 1.0 / p;
    RULE.with(|rule| rule.integrate(0.0, upper, |v| (s + v.powf(inv_p)).powf(p))) / p
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Adaptive Simpson, used as an independent oracle.
    fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
        fn rec(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
            let m = 0.5 * (a + b);
            let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
            let (flm, frm) = (f(lm), f(rm));
            let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
            let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
            let delta = left + right - whole;
            if depth == 0 || delta.abs() <= 15.0 * tol {
                left + right + delta / 15.0
            } else {
                rec(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1) + rec(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
            }
        }
        let (fa, fb, fm) = (f(a), f(b), f(0.5 * (a + b)));
        let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
        rec(f, a, b, fa, fm, fb, whole, tol, 50)
    }

    /// Analytic first subinterval using a two-term expansion of u^{H−½}
    /// around s, adaptive Simpson on the rest.
    fn oracle_kernel(t: f64, s: f64, h: f64) -> f64 {
        let p = h - 0.5;
        let delta: f64 = 1e-7;
        let head = s.powf(p) * delta.powf(p) / p + p * s.powf(p - 1.0) * delta.powf(p + 1.0) / (p + 1.0);
        let f = |u: f64| (u - s).powf(h - 1.5) * u.powf(p);
        // split geometrically so the steep part near s is resolved
        let mut tail = 0.0;
        let mut a = s + delta;
        let mut b = s + 2.0 * delta;
        while a < t {
            let bb = b.min(t);
            tail += adaptive_simpson(&f, a, bb, 1e-14);
            a = bb;
            b = s + 2.0 * (b - s);
        }
        let c = kernel_normalization(h).unwrap();
        c * s.powf(0.5 - h) * (head + tail)
    }

    #[test]
    fn brownian_kernel_is_one() {
        for (t, s) in [(1.0, 0.5), (2.0, 0.1), (0.3, 0.29)] {
            assert_eq!(kernel_k(t, s, 0.5).unwrap(), 1.0);
        }
    }

    #[test]
    fn matches_quadrature_oracle() {
        let k = kernel_k(1.0, 0.5, 0.75).unwrap();
        let oracle = oracle_kernel(1.0, 0.5, 0.75);
        assert!((k - oracle).abs() < 1e-8 * oracle.abs(), "{k} vs {oracle}");
        for (t, s, h) in [(1.0, 0.01, 0.6), (2.0, 1.5, 0.9), (1.0, 0.999, 0.55)] {
            let k = kernel_k(t, s, h).unwrap();
            let oracle = oracle_kernel(t, s, h);
            assert!((k - oracle).abs() < 1e-7 * oracle.abs(), "H={h}: {k} vs {oracle}");
        }
    }

    #[test]
    fn variance_identity() {
        // ∫_0^t K(t, s)² ds = t^{2H}; graded midpoints s = t·w⁵ tame the
        // s^{1−2H} endpoint singularity.
        for h in [0.6, 0.75, 0.9] {
            for t in [1.0, 2.0] {
                let n = 4000;
                let dw = 1.0 / n as f64;
                let v: f64 = (0..n)
                    .map(|k| {
                        let w = (k as f64 + 0.5) * dw;
                        let s = t * w.powi(5);
                        kernel_k(t, s, h).unwrap().powi(2) * 5.0 * t * w.powi(4) * dw
                    })
                    .sum();
                let want = f64::powf(t, 2.0 * h);
                assert!((v - want).abs() < 1e-3 * want, "H={h} t={t}: {v}");
            }
        }
    }

    #[test]
    fn domain_and_support() {
        assert!(kernel_k(1.0, 1.0, 0.75).is_err());
        assert!(kernel_k(1.0, 0.0, 0.75).is_err());
        assert!(kernel_k(1.0, 1.5, 0.75).is_err());
        assert!(matches!(kernel_k(1.0, 0.5, 0.3), Err(Error::Unsupported(_))));
    }
}
