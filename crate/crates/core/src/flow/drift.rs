use std::fmt;
use std::sync::Arc;

use crate::error::{domain, Result};
use crate::tolerances::{DRIFT_FD_RTOL, DRIFT_FD_STEP};

/// `(t, x, out)`: writes a vector (or row-major matrix) field into `out`.
pub type FieldFn = dyn Fn(f64, &[f64], &mut [f64]) + Send + Sync;

/// Drift `b(t, x)` with its spatial Jacobian and certified bounds.
#[derive(Clone)]
pub struct DriftField {
    name: String,
    dim: usize,
    b: Arc<FieldFn>,
    b_prime: Arc<FieldFn>,
    sup_norm_b_prime: f64,
    sup_norm_b: Option<f64>,
    divergence_free: bool,
    identically_zero: bool,
}

impl fmt::Debug for DriftField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DriftField")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .field("sup_norm_b_prime", &self.sup_norm_b_prime)
            .field("sup_norm_b", &self.sup_norm_b)
            .field("divergence_free", &self.divergence_free)
            .finish()
    }
}

/// Result of [`DriftField::check_consistency`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConsistencyReport {
    /// Largest `|fd − b′| / max(1, |b′|)` over the sampled points.
    pub max_relative_mismatch: f64,
    /// Largest max-row-sum norm of `b′` seen.
    pub max_jacobian_norm: f64,
}

impl ConsistencyReport {
    pub fn passed(&self, certified_bound: f64) -> bool {
        self.max_relative_mismatch <= DRIFT_FD_RTOL && self.max_jacobian_norm <= certified_bound
    }
}

impl DriftField {
    /// `b_prime` writes `∂b_i/∂x_j` at `out[i·dim + j]`. `sup_norm_b_prime`
    /// bounds the max-row-sum norm of the Jacobian on `[0, T] × R^d`.
    pub fn new(
        name: impl Into<String>,
        dim: usize,
        b: Arc<FieldFn>,
        b_prime: Arc<FieldFn>,
        sup_norm_b_prime: f64,
        sup_norm_b: Option<f64>,
        divergence_free: bool,
    ) -> Result<Self> {
        if dim == 0 {
            return domain("drift dimension must be positive");
        }
        if !(sup_norm_b_prime >= 0.0 && sup_norm_b_prime.is_finite()) {
            return domain(format!("‖b′‖∞ must be finite and nonnegative, got {sup_norm_b_prime}"));
        }
        Ok(Self {
            name: name.into(),
            dim,
            b,
            b_prime,
            sup_norm_b_prime,
            sup_norm_b,
            divergence_free,
            identically_zero: false,
        })
    }

    /// One-dimensional drift from scalar closures.
    pub fn scalar(
        name: impl Into<String>,
        b: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
        b_prime: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
        sup_norm_b_prime: f64,
        sup_norm_b: Option<f64>,
    ) -> Result<Self> {
        Self::new(
            name,
            1,
            Arc::new(move |t, x, out| out[0] = b(t, x[0])),
            Arc::new(move |t, x, out| out[0] = b_prime(t, x[0])),
            sup_norm_b_prime,
            sup_norm_b,
            false,
        )
    }

    pub fn zero(dim: usize) -> Self {
        let mut d = Self::new(
            "zero",
            dim,
            Arc::new(|_, _, out| out.fill(0.0)),
            Arc::new(|_, _, out| out.fill(0.0)),
            0.0,
            Some(0.0),
            true,
        )
        .expect("valid");
        d.identically_zero = true;
        d
    }

    /// `b(x) = λx` in one dimension.
    pub fn linear(lambda: f64) -> Self {
        Self::scalar("linear", move |_, x| lambda * x, move |_, _| lambda, lambda.abs(), None).expect("valid")
    }

    /// `b(x) = sin x`, with `‖b′‖∞ = sup|cos| = 1`.
    pub fn sin() -> Self {
        Self::scalar("sin", |_, x| x.sin(), |_, x| x.cos(), 1.0, Some(1.0)).expect("valid")
    }

    /// `b(p) = (−p₂, p₁)`, the rotation generator; divergence free.
    pub fn rotation_2d() -> Self {
        Self::new(
            "rotation-2d",
            2,
            Arc::new(|_, p, out| {
                out[0] = -p[1];
                out[1] = p[0];
            }),
            Arc::new(|_, _, out| out.copy_from_slice(&[0.0, -1.0, 1.0, 0.0])),
            1.0,
            None,
            true,
        )
        .expect("valid")
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn sup_norm_b_prime(&self) -> f64 {
        self.sup_norm_b_prime
    }

    pub fn sup_norm_b(&self) -> Option<f64> {
        self.sup_norm_b
    }

    pub fn divergence_free(&self) -> bool {
        self.divergence_free
    }

    pub fn is_zero(&self) -> bool {
        self.identically_zero
    }

    #[inline]
    pub fn eval(&self, t: f64, x: &[f64], out: &mut [f64]) {
        (self.b)(t, x, out)
    }

    #[inline]
    pub fn jacobian(&self, t: f64, x: &[f64], out: &mut [f64]) {
        (self.b_prime)(t, x, out)
    }

    pub fn eval_1d(&self, t: f64, x: f64) -> f64 {
        let mut out = [0.0];
        (self.b)(t, &[x], &mut out);
        out[0]
    }

    pub fn derivative_1d(&self, t: f64, x: f64) -> f64 {
        let mut out = [0.0];
        (self.b_prime)(t, &[x], &mut out);
        out[0]
    }

    /// Compares `b′` against central differences of `b` at the given points
    /// and records the largest Jacobian norm seen.
    pub fn check_consistency(&self, points: &[(f64, Vec<f64>)]) -> ConsistencyReport {
        let d = self.dim;
        let mut jac = vec![0.0; d * d];
        let (mut plus, mut minus) = (vec![0.0; d], vec![0.0; d]);
        let mut worst = 0.0f64;
        let mut norm = 0.0f64;
        for (t, x) in points {
            self.jacobian(*t, x, &mut jac);
            for i in 0..d {
                norm = norm.max((0..d).map(|j| jac[i * d + j].abs()).sum());
            }
            for j in 0..d {
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[j] += DRIFT_FD_STEP;
                xm[j] -= DRIFT_FD_STEP;
                self.eval(*t, &xp, &mut plus);
                self.eval(*t, &xm, &mut minus);
                for i in 0..d {
                    let fd = (plus[i] - minus[i]) / (2.0 * DRIFT_FD_STEP);
                    let exact = jac[i * d + j];
                    worst = worst.max((fd - exact).abs() / exact.abs().max(1.0));
                }
            }
        }
        ConsistencyReport { max_relative_mismatch: worst, max_jacobian_norm: norm }
    }
}
