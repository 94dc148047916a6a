use serde::{Deserialize, Serialize};

use super::{InitialDatum, ReactionField};
use crate::error::{domain, Error, Result};
use crate::fbm::FbmVectorPath;
use crate::flow::{inverse_endpoint, DriftField, SolverOptions};
use crate::rng::StreamSeed;
use crate::tolerances::FLOW_RTOL;

/// Stepping controls for the scalar ODE `Z′ = F(t, Z)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZOptions {
    /// Initial number of RK4 steps over `[0, t]`.
    pub steps: usize,
    pub rtol: f64,
    pub max_refinements: u32,
}

impl Default for ZOptions {
    fn default() -> Self {
        Self { steps: 64, rtol: FLOW_RTOL, max_refinements: 10 }
    }
}

/// `u(t, x)` together with where it came from.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolutionSample {
    pub t: f64,
    pub x: Vec<f64>,
    pub value: f64,
    pub seed: StreamSeed,
    /// Reaction term combined with a non-Brownian driver.
    pub extrapolated: bool,
}

fn rk4(f: &ReactionField, r: f64, t: f64, n: usize) -> f64 {
    let h = t / n as f64;
    let mut z = r;
    for k in 0..n {
        let s = k as f64 * h;
        let k1 = f.eval(s, z);
        let k2 = f.eval(s + 0.5 * h, z + 0.5 * h * k1);
        let k3 = f.eval(s + 0.5 * h, z + 0.5 * h * k2);
        let k4 = f.eval(s + h, z + h * k3);
        z += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    z
}

/// Solves `Z_t(r) = r + ∫_0^t F(s, Z_s(r)) ds` by RK4 with step doubling.
pub fn solve_z(f: &ReactionField, r: f64, t: f64, opts: ZOptions) -> Result<f64> {
    if !(t >= 0.0 && t.is_finite()) {
        return domain(format!("time must be nonnegative, got {t}"));
    }
    if opts.steps == 0 {
        return domain("Z solver needs at least one step");
    }
    if f.is_zero() || t == 0.0 {
        return Ok(r);
    }
    let mut n = opts.steps;
    let mut coarse = rk4(f, r, t, n);
    let mut last = (f64::NAN, f64::NAN);
    for _ in 0..=opts.max_refinements {
        let fine = rk4(f, r, t, 2 * n);
        let est = (fine - coarse).abs() / 15.0;
        let budget = opts.rtol * (1.0 + fine.abs());
        if est <= budget {
            return if fine.is_finite() { Ok(fine) } else { Err(Error::NonFinite("Z_t".into())) };
        }
        last = (est, budget);
        coarse = fine;
        n *= 2;
    }
    Err(Error::StepRejected { time: 0.0, estimate: last.0, budget: last.1 })
}

/// `u(t, x) = Z_t(u0(Y_{0,t}(x)))` at grid node `t_index`.
pub fn evaluate_solution(
    u0: &InitialDatum,
    f: &ReactionField,
    drift: &DriftField,
    driving: &FbmVectorPath,
    t_index: usize,
    x: &[f64],
    opts: SolverOptions,
) -> Result<SolutionSample> {
    if u0.dim() != drift.dim() {
        return Err(Error::GridMismatch(format!("u0 has dimension {}, drift {}", u0.dim(), drift.dim())));
    }
    let t = driving.grid().node(t_index);
    let foot = inverse_endpoint(drift, driving, t_index, x, opts)?;
    let value = solve_z(f, u0.value(&foot), t, ZOptions::default())?;
    let brownian = driving.hurst().components().iter().all(|&h| h == 0.5);
    Ok(SolutionSample {
        t,
        x: x.to_vec(),
        value,
        seed: driving.component(0).seed(),
        extrapolated: !f.is_zero() && !brownian,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fbm::{sample_fbm_vector, HurstVector, Method, TimeGrid};
    use crate::flow::{forward_endpoint, invert_pointwise};
    use proptest::prelude::*;

    fn driver(h: f64, n: usize, seed: u64) -> FbmVectorPath {
        let grid = TimeGrid::new(1.0, n).unwrap();
        sample_fbm_vector(&grid, &HurstVector::uniform(h, 1).unwrap(), StreamSeed::path(seed, 0), Method::default_for(n))
            .unwrap()
    }

    #[test]
    fn z_examples() {
        let o = ZOptions::default();
        assert_eq!(solve_z(&ReactionField::zero(), 1.7, 2.0, o).unwrap(), 1.7);
        assert_eq!(solve_z(&ReactionField::linear(3.0), 1.7, 0.0, o).unwrap(), 1.7);
        let z = solve_z(&ReactionField::linear(1.0), 1.7, 1.5, o).unwrap();
        let want = 1.7 * 1.5f64.exp();
        assert!((z - want).abs() < 1e-8 * want);
        let z = solve_z(&ReactionField::constant(1.0), 1.7, 1.5, o).unwrap();
        assert!((z - 3.2).abs() < 1e-13);
        let tight = ZOptions { steps: 1, rtol: 1e-16, max_refinements: 2 };
        assert!(matches!(solve_z(&ReactionField::linear(5.0), 1.0, 1.0, tight), Err(Error::StepRejected { .. })));
    }

    #[test]
    fn zero_drift_examples() {
        let b = driver(0.75, 64, 3);
        let bt = b.component(0).value(64);
        let o = SolverOptions::default();
        let zero = DriftField::zero(1);
        let s = evaluate_solution(&InitialDatum::identity(), &ReactionField::zero(), &zero, &b, 64, &[0.4], o).unwrap();
        assert!((s.value - (0.4 - bt)).abs() < 1e-15);
        assert!(!s.extrapolated);
        let s = evaluate_solution(&InitialDatum::cubic(), &ReactionField::zero(), &zero, &b, 64, &[0.4], o).unwrap();
        assert!((s.value - (0.4 - bt).powi(3)).abs() < 1e-14);
        let s = evaluate_solution(&InitialDatum::identity(), &ReactionField::constant(1.0), &zero, &b, 64, &[0.4], o).unwrap();
        assert!(s.extrapolated);
        assert!((s.value - (0.4 - bt + 1.0)).abs() < 1e-13);
    }

    #[test]
    fn two_inversion_routes_agree() {
        let o = SolverOptions::default();
        let sin = DriftField::sin();
        let u0 = InitialDatum::arctan();
        for seed in 0..4 {
            let b = driver(0.7, 512, seed);
            for x in [-2.0, 0.1, 1.3] {
                let s = evaluate_solution(&u0, &ReactionField::zero(), &sin, &b, 512, &[x], o).unwrap();
                let foot = invert_pointwise(&sin, &b, 512, &[x], o).unwrap();
                assert!((s.value - u0.value(&foot)).abs() < 1e-8, "seed {seed} x {x}");
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn constant_along_characteristics(seed in 0u64..500, x in -4.0f64..4.0, h in 0.5f64..0.95) {
            let b = driver(h, 128, seed);
            let o = SolverOptions::default();
            let sin = DriftField::sin();
            let u0 = InitialDatum::arctan_shift();
            let y = forward_endpoint(&sin, &b, 0, 128, &[x], o).unwrap();
            let s = evaluate_solution(&u0, &ReactionField::zero(), &sin, &b, 128, &y, o).unwrap();
            prop_assert!((s.value - u0.value_1d(x)).abs() < 1e-6);
        }

        #[test]
        fn range_is_preserved(seed in 0u64..500, x in -6.0f64..6.0) {
            let b = driver(0.6, 64, seed);
            let u0 = InitialDatum::arctan();
            let s = evaluate_solution(&u0, &ReactionField::zero(), &DriftField::sin(), &b, 64, &[x], SolverOptions::default()).unwrap();
            let (lo, hi) = u0.range();
            prop_assert!(s.value >= lo && s.value <= hi);
        }
    }
}
