use serde::Serialize;

use crate::error::{Error, Result};
use crate::fbm::TimeGrid;
use crate::flow::{DriftField, InverseFlowPath};
use crate::quadrature::cumulative_trapezoid;
use crate::transport::InitialDatum;

/// `α ↦ D_α Y_{s,t}(x)` on grid nodes `α_k = kΔt`, `k = 0..=t_index`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MalliavinTrace {
    grid: TimeGrid,
    s_index: usize,
    t_index: usize,
    x: f64,
    values: Vec<f64>,
}

impl MalliavinTrace {
    /// Builds the trace from a backward trajectory in one sweep.
    pub fn new(drift: &DriftField, inverse: &InverseFlowPath, s_index: usize) -> Result<Self> {
        if drift.dim() != 1 || inverse.dim() != 1 {
            return Err(Error::Unsupported("Malliavin traces are one-dimensional".into()));
        }
        let t_index = inverse.t_index();
        if s_index > t_index {
            return Err(Error::GridMismatch(format!("s node {s_index} after t node {t_index}")));
        }
        let grid = *inverse.grid();
        let integrand: Vec<f64> = (s_index..=t_index)
            .map(|k| drift.derivative_1d(grid.node(k), inverse.y_at(k)[0]))
            .collect();
        let cumulative = cumulative_trapezoid(&integrand, grid.dt());
        let mut values = vec![0.0; t_index + 1];
        for (v, c) in values[s_index..].iter_mut().zip(&cumulative) {
            *v = -(-c).exp();
        }
        Ok(Self { grid, s_index, t_index, x: inverse.terminal()[0], values })
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn s_index(&self) -> usize {
        self.s_index
    }

    pub fn t_index(&self) -> usize {
        self.t_index
    }

    pub fn x(&self) -> f64 {
        self.x
    }

    /// Node values on `0..=t_index`; zero before `s`.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Value at absolute node `k`, zero outside `[s, t]`.
    pub fn at(&self, k: usize) -> f64 {
        self.values.get(k).copied().unwrap_or(0.0)
    }
}

fn alpha_node(grid: &TimeGrid, alpha: f64) -> Result<Option<usize>> {
    if alpha < 0.0 || alpha > grid.t_end() {
        return Ok(None);
    }
    grid.index_of(alpha)
        .map(Some)
        .ok_or_else(|| Error::GridMismatch(format!("α = {alpha} is not a grid node (Δt = {})", grid.dt())))
}

/// `D_α Y_{s,t}(x)` for the backward trajectory ending at `(t, x)`.
pub fn derivative_y(drift: &DriftField, inverse: &InverseFlowPath, s_index: usize, t_index: usize, alpha: f64) -> Result<f64> {
    if t_index != inverse.t_index() {
        return Err(Error::GridMismatch(format!("trajectory ends at node {}, asked for {t_index}", inverse.t_index())));
    }
    let Some(k) = alpha_node(inverse.grid(), alpha)? else {
        return Ok(0.0);
    };
    if k < s_index || k > t_index {
        return Ok(0.0);
    }
    Ok(MalliavinTrace::new(drift, inverse, s_index)?.at(k))
}

/// `D_α u(t, x) = u0′(Y_{0,t}(x)) D_α Y_{0,t}(x)`.
pub fn derivative_u(u0: &InitialDatum, drift: &DriftField, inverse: &InverseFlowPath, t_index: usize, alpha: f64) -> Result<f64> {
    let slope = u0
        .derivative(inverse.endpoint()[0])
        .ok_or_else(|| Error::Unsupported(format!("initial datum {} has no derivative", u0.name())))?;
    Ok(slope * derivative_y(drift, inverse, 0, t_index, alpha)?)
}

/// `(e^{−T‖b′‖∞}, e^{T‖b′‖∞})`, the pathwise bounds on `|D_α Y|`.
pub fn derivative_bound_constants(drift: &DriftField, t_end: f64) -> (f64, f64) {
    let k = t_end * drift.sup_norm_b_prime();
    ((-k).exp(), k.exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fbm::{sample_fbm_vector, FbmVectorPath, HurstVector, Method};
    use crate::flow::{inverse_flow, SolverOptions};
    use crate::rng::StreamSeed;
    use proptest::prelude::*;

    fn driver(h: f64, n: usize, seed: u64) -> FbmVectorPath {
        let grid = TimeGrid::new(1.0, n).unwrap();
        sample_fbm_vector(&grid, &HurstVector::uniform(h, 1).unwrap(), StreamSeed::path(seed, 0), Method::default_for(n))
            .unwrap()
    }

    #[test]
    fn zero_drift_trace_is_minus_indicator() {
        let b = driver(0.7, 64, 1);
        let inv = inverse_flow(&DriftField::zero(1), &b, 48, &[0.3], SolverOptions::default()).unwrap();
        let tr = MalliavinTrace::new(&DriftField::zero(1), &inv, 16).unwrap();
        for k in 0..=64 {
            let want = if (16..=48).contains(&k) { -1.0 } else { 0.0 };
            assert_eq!(tr.at(k), want);
        }
        assert_eq!(derivative_y(&DriftField::zero(1), &inv, 16, 48, 0.875).unwrap(), 0.0);
        assert_eq!(derivative_y(&DriftField::zero(1), &inv, 16, 48, 0.125).unwrap(), 0.0);
        assert_eq!(derivative_y(&DriftField::zero(1), &inv, 16, 48, 1.5).unwrap(), 0.0);
        assert!(derivative_y(&DriftField::zero(1), &inv, 16, 48, 0.3).is_err());
        assert!(derivative_y(&DriftField::zero(1), &inv, 16, 40, 0.5).is_err());
    }

    #[test]
    fn constant_derivative_closed_form() {
        let b = driver(0.6, 64, 2);
        let lin = DriftField::linear(1.0);
        let inv = inverse_flow(&lin, &b, 64, &[0.3], SolverOptions::default()).unwrap();
        let v = derivative_y(&lin, &inv, 0, 64, 0.5).unwrap();
        assert!((v + (-0.5f64).exp()).abs() < 1e-14);
        assert!((v + 0.6065307).abs() < 1e-7);
    }

    #[test]
    fn chain_rule_examples() {
        let b = driver(0.75, 64, 3);
        let zero = DriftField::zero(1);
        let inv = inverse_flow(&zero, &b, 64, &[0.0], SolverOptions::default()).unwrap();
        let bt = b.component(0).value(64);
        let v = derivative_u(&InitialDatum::cubic(), &zero, &inv, 64, 0.25).unwrap();
        assert!((v + 3.0 * bt * bt).abs() < 1e-14);
        let sin = DriftField::sin();
        let inv = inverse_flow(&sin, &b, 64, &[0.4], SolverOptions::default()).unwrap();
        assert_eq!(
            derivative_u(&InitialDatum::identity(), &sin, &inv, 64, 0.25).unwrap(),
            derivative_y(&sin, &inv, 0, 64, 0.25).unwrap()
        );
    }

    #[test]
    fn bound_constants() {
        assert_eq!(derivative_bound_constants(&DriftField::zero(1), 3.0), (1.0, 1.0));
        let e = std::f64::consts::E;
        assert_eq!(derivative_bound_constants(&DriftField::sin(), 1.0), (1.0 / e, e));
        let (lo, hi) = derivative_bound_constants(&DriftField::sin(), 2.0);
        assert!((lo - (-2.0f64).exp()).abs() < 1e-16 && (hi - 2.0f64.exp()).abs() < 1e-15);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn traces_respect_pathwise_bounds(seed in 0u64..10_000, x in -5.0f64..5.0, h in 0.5f64..0.95, t_index in 1usize..=128) {
            let b = driver(h, 128, seed);
            let sin = DriftField::sin();
            let inv = inverse_flow(&sin, &b, t_index, &[x], SolverOptions::default()).unwrap();
            let tr = MalliavinTrace::new(&sin, &inv, 0).unwrap();
            let (lo, hi) = derivative_bound_constants(&sin, 1.0);
            prop_assert_eq!(tr.at(0), -1.0);
            for &v in tr.values() {
                prop_assert!(v < 0.0 && -v >= lo && -v <= hi);
            }
            let u0 = InitialDatum::arctan_shift();
            let (c, cc) = u0.monotone_bounds().unwrap();
            let du = derivative_u(&u0, &sin, &inv, t_index, 0.0).unwrap().abs();
            prop_assert!(du >= c * lo && du <= cc * hi);
        }
    }
}
