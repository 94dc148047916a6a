use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{domain, Error, Result};
use crate::quadrature::gauss_legendre;

type MapFn = dyn Fn(&[f64], &mut [f64]) + Send + Sync;
type InverseFn = dyn Fn(&[f64], &mut [f64]) -> Result<()> + Send + Sync;

/// Diffeomorphism `R^d → R^d` with its inverse and Jacobian determinant.
#[derive(Clone)]
pub struct Diffeomorphism {
    name: String,
    dim: usize,
    forward: Arc<MapFn>,
    inverse: Arc<InverseFn>,
    /// `|det Dφ(v)|` at a point of the domain.
    abs_det: Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>,
}

impl fmt::Debug for Diffeomorphism {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Diffeomorphism").field("name", &self.name).field("dim", &self.dim).finish()
    }
}

impl Diffeomorphism {
    pub fn new(
        name: impl Into<String>,
        dim: usize,
        forward: Arc<MapFn>,
        inverse: Arc<InverseFn>,
        abs_det: Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>,
    ) -> Self {
        Self { name: name.into(), dim, forward, inverse, abs_det }
    }

    pub fn identity(dim: usize) -> Self {
        Self::new(
            "identity",
            dim,
            Arc::new(|v, out| out.copy_from_slice(v)),
            Arc::new(|w, out| {
                out.copy_from_slice(w);
                Ok(())
            }),
            Arc::new(|_| 1.0),
        )
    }

    /// `v ↦ L v` for an invertible square matrix.
    pub fn linear(l: DMatrix<f64>) -> Result<Self> {
        if !l.is_square() {
            return domain("linear map must be square");
        }
        let det = l.determinant();
        let Some(inv) = l.clone().try_inverse().filter(|_| det != 0.0) else {
            return Err(Error::NotInvertible("linear initial map is singular".into()));
        };
        let dim = l.nrows();
        Ok(Self::new(
            "linear",
            dim,
            Arc::new(move |v, out| out.copy_from_slice((&l * DVector::from_column_slice(v)).as_slice())),
            Arc::new(move |w, out| {
                out.copy_from_slice((&inv * DVector::from_column_slice(w)).as_slice());
                Ok(())
            }),
            Arc::new(move |_| det.abs()),
        ))
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        (self.forward)(v, &mut out);
        out
    }

    pub fn invert(&self, w: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.dim];
        (self.inverse)(w, &mut out)?;
        Ok(out)
    }

    pub fn abs_det_jacobian(&self, v: &[f64]) -> f64 {
        (self.abs_det)(v)
    }
}

/// Vector reaction `F(t, z)` with the trace of its Jacobian, which drives
/// `log det DZ_t` through Liouville's formula.
#[derive(Clone)]
pub struct VectorReaction {
    name: String,
    dim: usize,
    f_time: Arc<dyn Fn(f64, &[f64], &mut [f64]) + Send + Sync>,
    trace: Arc<dyn Fn(f64, &[f64]) -> f64 + Send + Sync>,
    zero: bool,
}

impl fmt::Debug for VectorReaction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("VectorReaction").field("name", &self.name).field("dim", &self.dim).finish()
    }
}

impl VectorReaction {
    pub fn new(
        name: impl Into<String>,
        dim: usize,
        f: impl Fn(f64, &[f64], &mut [f64]) + Send + Sync + 'static,
        trace: impl Fn(f64, &[f64]) -> f64 + Send + Sync + 'static,
    ) -> Self {
        let f = Arc::new(f);
        Self {
            name: name.into(),
            dim,
            f_time: f,
            trace: Arc::new(trace),
            zero: false,
        }
    }

    pub fn zero(dim: usize) -> Self {
        Self { zero: true, ..Self::new("zero", dim, |_, _, out| out.fill(0.0), |_, _| 0.0) }
    }

    /// `F(t, z) = K z`.
    pub fn linear(k: DMatrix<f64>) -> Self {
        let dim = k.nrows();
        let tr = k.trace();
        Self::new(
            "linear",
            dim,
            move |_, z, out| out.copy_from_slice((&k * DVector::from_column_slice(z)).as_slice()),
            move |_, _| tr,
        )
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `(Z_t^{-1}(y), log|det DZ_t(Z_t^{-1}(y))|)` by RK4 on `[0, t]`
    /// backwards, with step doubling to `rtol`.
    pub fn inverse_with_log_det(&self, y: &[f64], t: f64, rtol: f64) -> Result<(Vec<f64>, f64)> {
        let (w, integral) = self.integrate(y, t, 0.0, rtol)?;
        // the backward integral of tr ∂F is −log det DZ_t
        Ok((w, -integral))
    }

    /// `Z_t(r)`.
    pub fn forward(&self, r: &[f64], t: f64, rtol: f64) -> Result<Vec<f64>> {
        Ok(self.integrate(r, 0.0, t, rtol)?.0)
    }

    /// Integrates `z′ = F(s, z)` together with `∫ tr ∂F` from `from` to `to`.
    fn integrate(&self, y: &[f64], from: f64, to: f64, rtol: f64) -> Result<(Vec<f64>, f64)> {
        if y.len() != self.dim {
            return domain(format!("reaction has dimension {}, point {}", self.dim, y.len()));
        }
        if self.zero || from == to {
            return Ok((y.to_vec(), 0.0));
        }
        let d = self.dim;
        let run = |steps: usize| -> Vec<f64> {
            let h = (to - from) / steps as f64;
            let mut s = vec![0.0; d + 1];
            s[..d].copy_from_slice(y);
            let rhs = |time: f64, s: &[f64]| -> Vec<f64> {
                let mut out = vec![0.0; d + 1];
                (self.f_time)(time, &s[..d], &mut out[..d]);
                out[d] = (self.trace)(time, &s[..d]);
                out
            };
            let axpy = |a: &[f64], k: &[f64], c: f64| a.iter().zip(k).map(|(a, k)| a + c * k).collect::<Vec<_>>();
            for i in 0..steps {
                let time = from + i as f64 * h;
                let k1 = rhs(time, &s);
                let k2 = rhs(time + 0.5 * h, &axpy(&s, &k1, 0.5 * h));
                let k3 = rhs(time + 0.5 * h, &axpy(&s, &k2, 0.5 * h));
                let k4 = rhs(time + h, &axpy(&s, &k3, h));
                for j in 0..=d {
                    s[j] += h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
                }
            }
            s
        };
        let mut steps = 32;
        let mut coarse = run(steps);
        for _ in 0..12 {
            let fine = run(2 * steps);
            let err = coarse.iter().zip(&fine).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max) / 15.0;
            let scale = fine.iter().map(|v| v.abs()).fold(0.0, f64::max);
            if err <= rtol * (1.0 + scale) {
                return Ok((fine[..d].to_vec(), fine[d]));
            }
            coarse = fine;
            steps *= 2;
        }
        Err(Error::NotInvertible("reaction flow did not converge".into()))
    }
}

/// Transition density `y ↦ p_t(y → x)` of `dX = A X dt + dW`:
/// `X_t(y) ~ N(e^{At} y, Σ_t)` with `Σ_t = ∫_0^t e^{As} e^{Aᵀs} ds`.
#[derive(Debug, Clone)]
pub struct LinearCharacteristicDensity {
    x: DVector<f64>,
    exp_at: DMatrix<f64>,
    precision: DMatrix<f64>,
    norm: f64,
}

impl LinearCharacteristicDensity {
    pub fn new(a: &DMatrix<f64>, t: f64, x: &[f64]) -> Result<Self> {
        let d = a.nrows();
        if !a.is_square() || x.len() != d || !(t > 0.0) {
            return domain("linear characteristic density needs square A, matching x and t > 0");
        }
        let (nodes, weights) = gauss_legendre(24);
        let mut sigma = DMatrix::zeros(d, d);
        for (u, w) in nodes.iter().zip(&weights) {
            let s = 0.5 * t * (u + 1.0);
            let e = (a * s).exp();
            sigma += (&e * e.transpose()) * (0.5 * t * w);
        }
        let det = sigma.determinant();
        let precision = sigma.try_inverse().ok_or_else(|| Error::NotInvertible("degenerate covariance".into()))?;
        Ok(Self {
            x: DVector::from_column_slice(x),
            exp_at: (a * t).exp(),
            precision,
            norm: ((2.0 * std::f64::consts::PI).powi(d as i32) * det).sqrt().recip(),
        })
    }

    pub fn eval(&self, y: &[f64]) -> f64 {
        let r = &self.x - &self.exp_at * DVector::from_column_slice(y);
        self.norm * (-0.5 * (r.transpose() * &self.precision * &r)[(0, 0)]).exp()
    }
}

/// Density of `u(t, x) = Z_t(u0(Y_{0,t}(x)))` at `y` for a divergence-free
/// drift and Brownian noise.
///
/// `char_density(v)` is the density of `X_t(v)` evaluated at `x`, seen as a
/// function of the starting point `v`; for divergence-free drifts this is also
/// the density of `Y_{0,t}(x)` at `v`. With `w = Z_t^{-1}(y)` and
/// `v = u0^{-1}(w)` the change of variables reads
/// `ρ̃(y) = ρ(v) · |det Du0(v)|^{-1} · |det DZ_t(w)|^{-1}`.
pub fn explicit_density_divfree(
    u0: &Diffeomorphism,
    reaction: &VectorReaction,
    char_density: &dyn Fn(&[f64]) -> f64,
    y: &[f64],
    t: f64,
) -> Result<f64> {
    let d = y.len();
    if d < 2 || u0.dim() != d || reaction.dim() != d {
        return domain(format!("explicit density needs matching dimensions ≥ 2, got {d}"));
    }
    let (w, log_det_z) = reaction.inverse_with_log_det(y, t, 1e-12)?;
    let v = u0.invert(&w)?;
    let jac = u0.abs_det_jacobian(&v);
    if !(jac > 0.0 && jac.is_finite()) {
        return Err(Error::NotInvertible(format!("u0 Jacobian vanishes at {v:?}")));
    }
    Ok(char_density(&v) / jac * (-log_det_z).exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::simpson_weights;

    fn rotation() -> DMatrix<f64> {
        DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0])
    }

    /// `(2πt)^{-1} exp(−|e^{−At}x − y|² / 2t)` written out with cos/sin.
    fn rotation_oracle(x: [f64; 2], y: [f64; 2], t: f64) -> f64 {
        let (c, s) = (t.cos(), t.sin());
        let back = [c * x[0] + s * x[1], -s * x[0] + c * x[1]];
        let r2 = (back[0] - y[0]).powi(2) + (back[1] - y[1]).powi(2);
        (-r2 / (2.0 * t)).exp() / (2.0 * std::f64::consts::PI * t)
    }

    #[test]
    fn rotation_benchmark_matches_closed_form() {
        for t in [0.5, 1.0, 2.0] {
            let x = [0.7, -0.4];
            let rho = LinearCharacteristicDensity::new(&rotation(), t, &x).unwrap();
            let id = Diffeomorphism::identity(2);
            let zero = VectorReaction::zero(2);
            for i in 0..8 {
                for j in 0..8 {
                    let y = [-3.0 + 6.0 * i as f64 / 7.0, -3.0 + 6.0 * j as f64 / 7.0];
                    let got = explicit_density_divfree(&id, &zero, &|v| rho.eval(v), &y, t).unwrap();
                    assert!((got - rotation_oracle(x, y, t)).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn density_integrates_to_one() {
        let x = [0.3, 0.2];
        let rho = LinearCharacteristicDensity::new(&rotation(), 1.0, &x).unwrap();
        let l = Diffeomorphism::linear(DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 0.0, 1.0])).unwrap();
        let k = VectorReaction::linear(DMatrix::from_row_slice(2, 2, &[0.3, 0.0, 0.1, -0.2]));
        let n = 321;
        let h = 48.0 / (n - 1) as f64;
        let w = simpson_weights(n, h);
        let mut mass = 0.0;
        for i in 0..n {
            for j in 0..n {
                let y = [-24.0 + i as f64 * h, -24.0 + j as f64 * h];
                mass += w[i] * w[j] * explicit_density_divfree(&l, &k, &|v| rho.eval(v), &y, 1.0).unwrap();
            }
        }
        assert!((mass - 1.0).abs() < 1e-6, "{mass}");
    }

    #[test]
    fn linear_reaction_closed_form() {
        // Z_t = e^{Kt}: ρ̃(y) = ρ(e^{−Kt} y) e^{−t tr K}
        let kmat = DMatrix::from_row_slice(2, 2, &[0.3, 0.5, -0.1, -0.2]);
        let k = VectorReaction::linear(kmat.clone());
        let rho = LinearCharacteristicDensity::new(&rotation(), 1.5, &[0.1, 0.9]).unwrap();
        let id = Diffeomorphism::identity(2);
        let back = (&kmat * -1.5).exp();
        for y in [[0.0, 0.0], [1.0, -0.5], [-2.0, 0.3]] {
            let got = explicit_density_divfree(&id, &k, &|v| rho.eval(v), &y, 1.5).unwrap();
            let w = &back * DVector::from_column_slice(&y);
            let want = rho.eval(w.as_slice()) * (-1.5 * kmat.trace()).exp();
            assert!((got - want).abs() < 1e-10 * want.max(1e-300), "{got} vs {want}");
        }
    }

    #[test]
    fn reaction_forward_inverts_backward() {
        let k = VectorReaction::new("swirl", 2, |t, z, out| {
            out[0] = z[1].sin() + 0.1 * t;
            out[1] = -0.3 * z[0];
        }, |_, _| 0.0);
        let r = [0.4, -1.1];
        let y = k.forward(&r, 1.3, 1e-12).unwrap();
        let (back, log_det) = k.inverse_with_log_det(&y, 1.3, 1e-12).unwrap();
        assert!((back[0] - r[0]).abs() < 1e-10 && (back[1] - r[1]).abs() < 1e-10);
        assert_eq!(log_det, 0.0);
    }

    #[test]
    fn errors() {
        assert!(Diffeomorphism::linear(DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0])).is_err());
        let rho = |_: &[f64]| 1.0;
        assert!(explicit_density_divfree(&Diffeomorphism::identity(1), &VectorReaction::zero(1), &rho, &[0.0], 1.0).is_err());
        assert!(explicit_density_divfree(&Diffeomorphism::identity(2), &VectorReaction::zero(3), &rho, &[0.0, 0.0], 1.0).is_err());
    }
}
