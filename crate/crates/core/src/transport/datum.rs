use std::fmt;
use std::sync::Arc;

use crate::error::{domain, Result};

type ScalarFn = dyn Fn(f64) -> f64 + Send + Sync;
type PointFn = dyn Fn(&[f64]) -> f64 + Send + Sync;

/// Initial condition `u0: R^d → R`.
#[derive(Clone)]
pub struct InitialDatum {
    name: String,
    dim: usize,
    value: Arc<PointFn>,
    /// Derivative, one-dimensional data only.
    derivative: Option<Arc<ScalarFn>>,
    /// `(c, C)` with `c ≤ u0′ ≤ C`, when the datum is declared monotone.
    monotone_bounds: Option<(f64, f64)>,
    range: (f64, f64),
}

impl fmt::Debug for InitialDatum {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("InitialDatum")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .field("monotone_bounds", &self.monotone_bounds)
            .field("range", &self.range)
            .finish()
    }
}

impl InitialDatum {
    /// One-dimensional datum with derivative. `range` is `(inf u0, sup u0)`.
    pub fn scalar(
        name: impl Into<String>,
        value: impl Fn(f64) -> f64 + Send + Sync + 'static,
        derivative: impl Fn(f64) -> f64 + Send + Sync + 'static,
        monotone_bounds: Option<(f64, f64)>,
        range: (f64, f64),
    ) -> Result<Self> {
        if let Some((c, cc)) = monotone_bounds {
            if !(c > 0.0 && c <= cc && cc.is_finite()) {
                return domain(format!("monotone bounds need 0 < c ≤ C < ∞, got ({c}, {cc})"));
            }
        }
        Ok(Self {
            name: name.into(),
            dim: 1,
            value: Arc::new(move |x| value(x[0])),
            derivative: Some(Arc::new(derivative)),
            monotone_bounds,
            range,
        })
    }

    /// Datum on `R^d` without derivative information.
    pub fn multivariate(
        name: impl Into<String>,
        dim: usize,
        value: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
        range: (f64, f64),
    ) -> Self {
        Self { name: name.into(), dim, value: Arc::new(value), derivative: None, monotone_bounds: None, range }
    }

    pub fn identity() -> Self {
        Self::scalar("identity", |x| x, |_| 1.0, Some((1.0, 1.0)), (f64::NEG_INFINITY, f64::INFINITY)).expect("valid")
    }

    pub fn cubic() -> Self {
        Self::scalar("cubic", |x| x * x * x, |x| 3.0 * x * x, None, (f64::NEG_INFINITY, f64::INFINITY)).expect("valid")
    }

    /// `u0(y) = y + arctan(y)/2`, so `1 < u0′ ≤ 3/2`.
    pub fn arctan_shift() -> Self {
        Self::scalar(
            "arctan-shift",
            |y| y + 0.5 * y.atan(),
            |y| 1.0 + 0.5 / (1.0 + y * y),
            Some((1.0, 1.5)),
            (f64::NEG_INFINITY, f64::INFINITY),
        )
        .expect("valid")
    }

    pub fn arctan() -> Self {
        Self::scalar("arctan", f64::atan, |y| 1.0 / (1.0 + y * y), None, (-std::f64::consts::FRAC_PI_2, std::f64::consts::FRAC_PI_2))
            .expect("valid")
    }

    /// Smooth bump of height 1 on `(−2, 2)`.
    pub fn bump() -> Self {
        let b = TestFunction::new(0.0, 2.0).expect("valid");
        let d = b;
        Self::scalar("bump", move |x| b.value(x) * std::f64::consts::E, move |x| d.derivative(x) * std::f64::consts::E, None, (0.0, 1.0))
            .expect("valid")
    }

    pub fn zero() -> Self {
        Self::scalar("zero", |_| 0.0, |_| 0.0, None, (0.0, 0.0)).expect("valid")
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        (self.value)(x)
    }

    pub fn value_1d(&self, x: f64) -> f64 {
        (self.value)(&[x])
    }

    pub fn derivative(&self, x: f64) -> Option<f64> {
        self.derivative.as_ref().map(|d| d(x))
    }

    pub fn monotone_bounds(&self) -> Option<(f64, f64)> {
        self.monotone_bounds
    }

    pub fn range(&self) -> (f64, f64) {
        self.range
    }

    /// Whether `u0′(x) ∈ [c, C]` at every sample point (vacuous when no bounds are declared).
    pub fn check_monotone(&self, points: &[f64]) -> bool {
        match (self.monotone_bounds, &self.derivative) {
            (Some((c, cc)), Some(d)) => points.iter().all(|&x| {
                let v = d(x);
                v >= c && v <= cc
            }),
            _ => true,
        }
    }
}

/// Reaction term `F(t, z)` of the scalar equation `Z′ = F(t, Z)`.
#[derive(Clone)]
pub struct ReactionField {
    name: String,
    f: Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>,
    lipschitz: f64,
    zero: bool,
}

impl fmt::Debug for ReactionField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ReactionField").field("name", &self.name).field("lipschitz", &self.lipschitz).finish()
    }
}

impl ReactionField {
    pub fn new(name: impl Into<String>, f: impl Fn(f64, f64) -> f64 + Send + Sync + 'static, lipschitz: f64) -> Result<Self> {
        if !(lipschitz >= 0.0 && lipschitz.is_finite()) {
            return domain(format!("reaction Lipschitz constant must be finite, got {lipschitz}"));
        }
        Ok(Self { name: name.into(), f: Arc::new(f), lipschitz, zero: false })
    }

    pub fn zero() -> Self {
        Self { zero: true, ..Self::new("zero", |_, _| 0.0, 0.0).expect("valid") }
    }

    /// `F(t, z) = κz`.
    pub fn linear(kappa: f64) -> Self {
        Self::new("linear", move |_, z| kappa * z, kappa.abs()).expect("valid")
    }

    pub fn constant(c: f64) -> Self {
        Self::new("constant", move |_, _| c, 0.0).expect("valid")
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    pub fn is_zero(&self) -> bool {
        self.zero
    }

    #[inline]
    pub fn eval(&self, t: f64, z: f64) -> f64 {
        (self.f)(t, z)
    }
}

/// Bump `φ(x) = exp(−1/(1 − ((x − c)/r)²))` supported on `(c − r, c + r)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TestFunction {
    center: f64,
    radius: f64,
}

impl TestFunction {
    pub fn new(center: f64, radius: f64) -> Result<Self> {
        if !(radius > 0.0 && radius.is_finite() && center.is_finite()) {
            return domain(format!("test function needs a positive radius, got {radius}"));
        }
        Ok(Self { center, radius })
    }

    pub fn support(&self) -> (f64, f64) {
        (self.center - self.radius, self.center + self.radius)
    }

    pub fn value(&self, x: f64) -> f64 {
        let y = (x - self.center) / self.radius;
        let q = 1.0 - y * y;
        if q <= 0.0 {
            0.0
        } else {
            (-1.0 / q).exp()
        }
    }

    pub fn derivative(&self, x: f64) -> f64 {
        let y = (x - self.center) / self.radius;
        let q = 1.0 - y * y;
        if q <= 0.0 {
            0.0
        } else {
            (-1.0 / q).exp() * (-2.0 * y / (q * q)) / self.radius
        }
    }
}
