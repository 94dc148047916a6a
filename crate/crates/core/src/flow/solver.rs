use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::DriftField;
use crate::error::{domain, Error, Result};
use crate::fbm::{FbmVectorPath, TimeGrid};
use crate::io::csv_table;
use crate::rng::StreamSeed;
use crate::tolerances::{FLOW_RTOL, INVERT_POINTWISE};

/// RK4 controls for one grid interval of the driving path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverOptions {
    /// RK4 steps per grid interval.
    pub substeps: usize,
    /// Step-doubling error budget; `None` trusts `substeps` blindly.
    pub rtol: Option<f64>,
    /// How many times the substep count may be doubled before giving up.
    pub max_refinements: u32,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { substeps: 1, rtol: Some(FLOW_RTOL), max_refinements: 6 }
    }
}

impl SolverOptions {
    pub fn fixed(substeps: usize) -> Self {
        Self { substeps, rtol: None, max_refinements: 0 }
    }

    fn validate(&self) -> Result<()> {
        if self.substeps == 0 {
            return domain("flow.substeps must be positive");
        }
        if let Some(r) = self.rtol {
            if !(r > 0.0 && r.is_finite()) {
                return domain(format!("flow.rtol must be positive, got {r}"));
            }
        }
        Ok(())
    }
}

/// Forward trajectory `X_{s,t}(x)` stored on grid nodes `s_index..=t_index`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FlowPath {
    grid: TimeGrid,
    start_index: usize,
    end_index: usize,
    dim: usize,
    start: Vec<f64>,
    values: Vec<f64>,
    /// Seed of the driving path (component 0); paths are re-creatable from it.
    seed: StreamSeed,
}

impl FlowPath {
    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn start_index(&self) -> usize {
        self.start_index
    }

    pub fn end_index(&self) -> usize {
        self.end_index
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn start(&self) -> &[f64] {
        &self.start
    }

    pub fn seed(&self) -> StreamSeed {
        self.seed
    }

    /// State at absolute grid node `k`.
    pub fn at(&self, k: usize) -> &[f64] {
        assert!(k >= self.start_index && k <= self.end_index, "node {k} outside the stored range");
        let i = k - self.start_index;
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn endpoint(&self) -> &[f64] {
        self.at(self.end_index)
    }

    pub fn to_csv(&self) -> String {
        trajectory_csv("t", (self.start_index..=self.end_index).map(|k| self.grid.node(k)), self.dim, &self.values)
    }
}

/// Backward process `R(u) = Y_{t−u,t}(x)` for `u ∈ [0, t]` on grid nodes.
///
/// `value(j)` is `R(u_j)` with `u_j = j·Δt`; in particular `value(0) = x` and
/// `value(t_index) = Y_{0,t}(x)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InverseFlowPath {
    grid: TimeGrid,
    t_index: usize,
    dim: usize,
    terminal: Vec<f64>,
    values: Vec<f64>,
    seed: StreamSeed,
}

impl InverseFlowPath {
    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn t_index(&self) -> usize {
        self.t_index
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn terminal(&self) -> &[f64] {
        &self.terminal
    }

    pub fn seed(&self) -> StreamSeed {
        self.seed
    }

    pub fn len(&self) -> usize {
        self.t_index + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn value(&self, j: usize) -> &[f64] {
        &self.values[j * self.dim..(j + 1) * self.dim]
    }

    /// `Y_{r,t}(x)` for the grid node `r_index ≤ t_index`.
    pub fn y_at(&self, r_index: usize) -> &[f64] {
        self.value(self.t_index - r_index)
    }

    /// `Y_{0,t}(x)`.
    pub fn endpoint(&self) -> &[f64] {
        self.value(self.t_index)
    }

    /// First coordinate of every node, for the scalar case.
    pub fn scalar_values(&self) -> Vec<f64> {
        self.values.iter().step_by(self.dim).copied().collect()
    }

    pub fn to_csv(&self) -> String {
        let dt = self.grid.dt();
        trajectory_csv("u", (0..=self.t_index).map(|j| j as f64 * dt), self.dim, &self.values)
    }
}

/// Jacobian `∂X_{s,t}(x)/∂x` along a forward trajectory (row-major d×d per node).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VariationPath {
    flow: FlowPath,
    jacobians: Vec<f64>,
}

impl VariationPath {
    pub fn flow(&self) -> &FlowPath {
        &self.flow
    }

    pub fn at(&self, k: usize) -> &[f64] {
        let d2 = self.flow.dim * self.flow.dim;
        let i = k - self.flow.start_index;
        &self.jacobians[i * d2..(i + 1) * d2]
    }

    pub fn determinant(&self, k: usize) -> f64 {
        let d = self.flow.dim;
        DMatrix::from_row_slice(d, d, self.at(k)).determinant()
    }

    pub fn endpoint(&self) -> &[f64] {
        self.at(self.flow.end_index)
    }
}

fn trajectory_csv(first: &str, times: impl Iterator<Item = f64>, dim: usize, values: &[f64]) -> String {
    let mut header = vec![first.to_string()];
    header.extend((1..=dim).map(|i| format!("value_{i}")));
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let rows = times.zip(values.chunks(dim)).map(|(t, v)| {
        let mut row = vec![t];
        row.extend_from_slice(v);
        row
    });
    csv_table(&header, rows)
}

struct Integrator<'a> {
    drift: &'a DriftField,
    driving: &'a FbmVectorPath,
    opts: SolverOptions,
    with_jacobian: bool,
    d: usize,
    // scratch
    k: [Vec<f64>; 4],
    tmp: Vec<f64>,
    point: Vec<f64>,
    jac: Vec<f64>,
    b_from: Vec<f64>,
    b_to: Vec<f64>,
    b_ref: Vec<f64>,
    coarse: Vec<f64>,
    fine: Vec<f64>,
}

impl<'a> Integrator<'a> {
    fn new(drift: &'a DriftField, driving: &'a FbmVectorPath, opts: SolverOptions, with_jacobian: bool) -> Result<Self> {
        opts.validate()?;
        let d = drift.dim();
        if driving.dim() != d {
            return Err(Error::GridMismatch(format!("drift has dimension {d}, driving path {}", driving.dim())));
        }
        let n = if with_jacobian { d + d * d } else { d };
        Ok(Self {
            drift,
            driving,
            opts,
            with_jacobian,
            d,
            k: std::array::from_fn(|_| vec![0.0; n]),
            tmp: vec![0.0; n],
            point: vec![0.0; d],
            jac: vec![0.0; d * d],
            b_from: vec![0.0; d],
            b_to: vec![0.0; d],
            b_ref: vec![0.0; d],
            coarse: vec![0.0; n],
            fine: vec![0.0; n],
        })
    }

    fn state_len(&self) -> usize {
        self.tmp.len()
    }

    fn initial_state(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.state_len()];
        y[..self.d].copy_from_slice(x);
        if self.with_jacobian {
            for i in 0..self.d {
                y[self.d + i * self.d + i] = 1.0;
            }
        }
        y
    }

    /// Writes `X = S + B_τ − B_ref` for the current reference into `out`.
    fn position(&mut self, k: usize, state: &[f64], out: &mut [f64]) {
        self.driving.node_into(k, &mut self.b_to);
        for i in 0..self.d {
            out[i] = state[i] + self.b_to[i] - self.b_ref[i];
        }
    }

    /// Right-hand side in the unit interval variable `λ`, scaled by `τ1 − τ0`.
    fn rhs(&mut self, lambda: f64, tau0: f64, tau1: f64, y: &[f64], slot: usize) {
        let d = self.d;
        let h = tau1 - tau0;
        let tau = tau0 + lambda * h;
        for i in 0..d {
            self.point[i] = y[i] + self.b_from[i] + lambda * (self.b_to[i] - self.b_from[i]) - self.b_ref[i];
        }
        let out = &mut self.k[slot];
        self.drift.eval(tau, &self.point, &mut out[..d]);
        for v in &mut out[..d] {
            *v *= h;
        }
        if self.with_jacobian {
            self.drift.jacobian(tau, &self.point, &mut self.jac);
            for i in 0..d {
                for j in 0..d {
                    let mut acc = 0.0;
                    for m in 0..d {
                        acc += self.jac[i * d + m] * y[d + m * d + j];
                    }
                    out[d + i * d + j] = h * acc;
                }
            }
        }
    }

    fn rk4(&mut self, y: &mut [f64], tau0: f64, tau1: f64, m: usize) {
        let h = 1.0 / m as f64;
        let n = y.len();
        for step in 0..m {
            let l0 = step as f64 * h;
            self.rhs(l0, tau0, tau1, y, 0);
            for i in 0..n {
                self.tmp[i] = y[i] + 0.5 * h * self.k[0][i];
            }
            let tmp = std::mem::take(&mut self.tmp);
            self.rhs(l0 + 0.5 * h, tau0, tau1, &tmp, 1);
            let mut tmp = tmp;
            for i in 0..n {
                tmp[i] = y[i] + 0.5 * h * self.k[1][i];
            }
            self.rhs(l0 + 0.5 * h, tau0, tau1, &tmp, 2);
            for i in 0..n {
                tmp[i] = y[i] + h * self.k[2][i];
            }
            self.rhs(l0 + h, tau0, tau1, &tmp, 3);
            self.tmp = tmp;
            for i in 0..n {
                y[i] += h / 6.0 * (self.k[0][i] + 2.0 * self.k[1][i] + 2.0 * self.k[2][i] + self.k[3][i]);
            }
        }
    }

    /// Advances `y` across the grid interval between nodes `k0` and `k1`
    /// (either direction).
    fn advance(&mut self, y: &mut [f64], k0: usize, k1: usize) -> Result<()> {
        let grid = self.driving.grid();
        let (tau0, tau1) = (grid.node(k0), grid.node(k1));
        self.driving.node_into(k0, &mut self.b_from);
        self.driving.node_into(k1, &mut self.b_to);
        let Some(rtol) = self.opts.rtol else {
            self.rk4(y, tau0, tau1, self.opts.substeps);
            return finite(y, tau0);
        };
        let mut m = self.opts.substeps;
        let mut coarse = std::mem::take(&mut self.coarse);
        let mut fine = std::mem::take(&mut self.fine);
        let mut last = (0.0, 0.0);
        for _ in 0..=self.opts.max_refinements {
            coarse.copy_from_slice(y);
            fine.copy_from_slice(y);
            self.rk4(&mut coarse, tau0, tau1, m);
            self.rk4(&mut fine, tau0, tau1, 2 * m);
            // Richardson estimate of the fine solution's error for a 4th-order method.
            let est = coarse.iter().zip(&fine).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max) / 15.0;
            let scale = fine.iter().map(|v| v.abs()).fold(0.0, f64::max);
            let budget = rtol * (1.0 + scale);
            if est <= budget && est.is_finite() {
                y.copy_from_slice(&fine);
                self.coarse = coarse;
                self.fine = fine;
                return finite(y, tau0);
            }
            last = (est, budget);
            m *= 2;
        }
        self.coarse = coarse;
        self.fine = fine;
        Err(Error::StepRejected { time: tau0, estimate: last.0, budget: last.1 })
    }

    /// Integrates from node `from` to node `to`, with the driver referenced at
    /// `from`. Calls `record(k, X, J)` at every node visited, `from` included.
    fn run(
        &mut self,
        x: &[f64],
        from: usize,
        to: usize,
        mut record: impl FnMut(usize, &[f64], Option<&[f64]>),
    ) -> Result<Vec<f64>> {
        if x.len() != self.d {
            return Err(Error::GridMismatch(format!("point has dimension {}, drift {}", x.len(), self.d)));
        }
        let n_nodes = self.driving.grid().len();
        if from >= n_nodes || to >= n_nodes {
            return domain(format!("node index outside grid of {n_nodes} nodes"));
        }
        if !x.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("flow starting point".into()));
        }
        self.driving.node_into(from, &mut self.b_ref);
        let mut y = self.initial_state(x);
        let d = self.d;
        let mut pos = vec![0.0; d];
        record(from, x, self.with_jacobian.then(|| &y[d..]));
        let mut k = from;
        while k != to {
            let next = if to > k { k + 1 } else { k - 1 };
            if !self.drift.is_zero() {
                self.advance(&mut y, k, next)?;
            }
            k = next;
            self.position(k, &y, &mut pos);
            record(k, &pos, self.with_jacobian.then(|| &y[d..]));
        }
        let mut out = pos;
        if from == to {
            out.copy_from_slice(x);
        }
        if self.with_jacobian {
            out.extend_from_slice(&y[d..]);
        }
        Ok(out)
    }
}

fn finite(y: &[f64], time: f64) -> Result<()> {
    if y.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(format!("flow state at t = {time}")))
    }
}

fn check_order(s_index: usize, t_index: usize) -> Result<()> {
    if s_index > t_index {
        return domain(format!("flow start node {s_index} is after end node {t_index}"));
    }
    Ok(())
}

/// Forward flow `X_{s,·}(x)` from node `s_index` to node `t_index`.
pub fn forward_flow(
    drift: &DriftField,
    driving: &FbmVectorPath,
    s_index: usize,
    t_index: usize,
    x: &[f64],
    opts: SolverOptions,
) -> Result<FlowPath> {
    check_order(s_index, t_index)?;
    let d = drift.dim();
    let mut values = Vec::with_capacity((t_index - s_index + 1) * d);
    Integrator::new(drift, driving, opts, false)?.run(x, s_index, t_index, |_, p, _| values.extend_from_slice(p))?;
    Ok(FlowPath {
        grid: *driving.grid(),
        start_index: s_index,
        end_index: t_index,
        dim: d,
        start: x.to_vec(),
        values,
        seed: driving.component(0).seed(),
    })
}

/// `X_{s,t}(x)` without storing the trajectory.
pub fn forward_endpoint(
    drift: &DriftField,
    driving: &FbmVectorPath,
    s_index: usize,
    t_index: usize,
    x: &[f64],
    opts: SolverOptions,
) -> Result<Vec<f64>> {
    check_order(s_index, t_index)?;
    Integrator::new(drift, driving, opts, false)?.run(x, s_index, t_index, |_, _, _| {})
}

/// `(X_{0,t}(x), ∂X_{0,t}/∂x)` with the Jacobian row-major.
pub fn forward_with_jacobian(
    drift: &DriftField,
    driving: &FbmVectorPath,
    t_index: usize,
    x: &[f64],
    opts: SolverOptions,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let d = drift.dim();
    let mut out = Integrator::new(drift, driving, opts, true)?.run(x, 0, t_index, |_, _, _| {})?;
    let jac = out.split_off(d);
    Ok((out, jac))
}

/// Trajectory plus Jacobian of `X_{0,·}(x)` up to node `t_index`.
pub fn flow_jacobian(
    drift: &DriftField,
    driving: &FbmVectorPath,
    t_index: usize,
    x: &[f64],
    opts: SolverOptions,
) -> Result<VariationPath> {
    let d = drift.dim();
    let mut values = Vec::with_capacity((t_index + 1) * d);
    let mut jacobians = Vec::with_capacity((t_index + 1) * d * d);
    Integrator::new(drift, driving, opts, true)?.run(x, 0, t_index, |_, p, j| {
        values.extend_from_slice(p);
        jacobians.extend_from_slice(j.expect("jacobian requested"));
    })?;
    Ok(VariationPath {
        flow: FlowPath {
            grid: *driving.grid(),
            start_index: 0,
            end_index: t_index,
            dim: d,
            start: x.to_vec(),
            values,
            seed: driving.component(0).seed(),
        },
        jacobians,
    })
}

/// Backward process `R(u) = x − ∫_0^u b(t−a, R(a)) da − (B_t − B_{t−u})`.
pub fn inverse_flow(
    drift: &DriftField,
    driving: &FbmVectorPath,
    t_index: usize,
    x: &[f64],
    opts: SolverOptions,
) -> Result<InverseFlowPath> {
    let d = drift.dim();
    let mut values = Vec::with_capacity((t_index + 1) * d);
    Integrator::new(drift, driving, opts, false)?.run(x, t_index, 0, |_, p, _| values.extend_from_slice(p))?;
    Ok(InverseFlowPath {
        grid: *driving.grid(),
        t_index,
        dim: d,
        terminal: x.to_vec(),
        values,
        seed: driving.component(0).seed(),
    })
}

/// `Y_{0,t}(x)` without storing the backward trajectory.
pub fn inverse_endpoint(
    drift: &DriftField,
    driving: &FbmVectorPath,
    t_index: usize,
    x: &[f64],
    opts: SolverOptions,
) -> Result<Vec<f64>> {
    Integrator::new(drift, driving, opts, false)?.run(x, t_index, 0, |_, _, _| {})
}

/// Solves `X_{0,t}(x) = y` for `x` by root finding on the forward flow.
///
/// In one dimension the map is strictly increasing, so a bracketed Newton
/// iteration with bisection fallback is used; otherwise damped Newton.
pub fn invert_pointwise(
    drift: &DriftField,
    driving: &FbmVectorPath,
    t_index: usize,
    y: &[f64],
    opts: SolverOptions,
) -> Result<Vec<f64>> {
    let d = drift.dim();
    if y.len() != d {
        return Err(Error::GridMismatch(format!("point has dimension {}, drift {d}", y.len())));
    }
    let bt: Vec<f64> = {
        let (mut a, mut b) = (vec![0.0; d], vec![0.0; d]);
        driving.node_into(t_index, &mut a);
        driving.node_into(0, &mut b);
        a.iter().zip(&b).map(|(a, b)| a - b).collect()
    };
    let guess: Vec<f64> = y.iter().zip(&bt).map(|(y, b)| y - b).collect();
    let mut integ = Integrator::new(drift, driving, opts, true)?;
    let mut eval = |x: &[f64]| -> Result<(Vec<f64>, Vec<f64>)> {
        let mut out = integ.run(x, 0, t_index, |_, _, _| {})?;
        let j = out.split_off(d);
        Ok((out, j))
    };
    let scale = y.iter().map(|v| v.abs()).fold(0.0, f64::max);
    let tol = INVERT_POINTWISE * (1.0 + scale);
    if d == 1 {
        invert_scalar(&mut eval, y[0], guess[0], drift, driving.grid().node(t_index), tol)
    } else {
        invert_newton(&mut eval, y, guess, tol)
    }
}

type Evaluator<'a> = dyn FnMut(&[f64]) -> Result<(Vec<f64>, Vec<f64>)> + 'a;

fn invert_scalar(eval: &mut Evaluator<'_>, y: f64, guess: f64, drift: &DriftField, t: f64, tol: f64) -> Result<Vec<f64>> {
    let mut f = |x: f64| -> Result<(f64, f64)> {
        let (v, j) = eval(&[x])?;
        Ok((v[0] - y, j[0]))
    };
    // |X_t(x) − x − B_t| ≤ ‖b‖∞ t gives a bracket when the bound is known.
    let mut width = drift.sup_norm_b().map_or(1.0, |b| b * t * (1.0 + 1e-9) + 1e-12);
    let (mut lo, mut hi) = (guess - width, guess + width);
    let (mut f_lo, _) = f(lo)?;
    let (mut f_hi, _) = f(hi)?;
    let mut expansions = 0;
    while !(f_lo <= 0.0 && f_hi >= 0.0) {
        expansions += 1;
        if expansions > 60 {
            return Err(Error::BracketNotFound { target: y, expansions });
        }
        width *= 2.0;
        if f_lo > 0.0 {
            lo = guess - width;
            f_lo = f(lo)?.0;
        }
        if f_hi < 0.0 {
            hi = guess + width;
            f_hi = f(hi)?.0;
        }
    }
    let mut x = guess.clamp(lo, hi);
    let mut best = (f64::INFINITY, x);
    for _ in 0..200 {
        let (fx, dfx) = f(x)?;
        if fx.abs() < best.0 {
            best = (fx.abs(), x);
        }
        if fx.abs() <= tol * 1e-4 || hi - lo <= f64::EPSILON * (1.0 + x.abs()) {
            break;
        }
        if fx < 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        let newton = x - fx / dfx;
        x = if dfx > 0.0 && newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
    }
    if best.0 <= tol {
        Ok(vec![best.1])
    } else {
        Err(Error::NewtonDiverged { residual: best.0, iterations: 200 })
    }
}

fn invert_newton(eval: &mut Evaluator<'_>, y: &[f64], mut x: Vec<f64>, tol: f64) -> Result<Vec<f64>> {
    let d = y.len();
    let norm = |v: &[f64], y: &[f64]| v.iter().zip(y).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    let (mut fx, mut jx) = eval(&x)?;
    let mut r = norm(&fx, y);
    let max_iter = 60;
    for _ in 0..max_iter {
        if r <= tol * 1e-4 {
            break;
        }
        let jm = DMatrix::from_row_slice(d, d, &jx);
        let rhs = DVector::from_iterator(d, fx.iter().zip(y).map(|(a, b)| a - b));
        let Some(delta) = jm.lu().solve(&rhs) else {
            return Err(Error::NotInvertible("flow Jacobian is singular".into()));
        };
        let mut lambda = 1.0;
        loop {
            let trial: Vec<f64> = x.iter().zip(delta.iter()).map(|(x, dx)| x - lambda * dx).collect();
            let (ft, jt) = eval(&trial)?;
            let rt = norm(&ft, y);
            if rt < r || lambda < 1e-6 {
                x = trial;
                fx = ft;
                jx = jt;
                r = rt;
                break;
            }
            lambda *= 0.5;
        }
    }
    if r <= tol {
        Ok(x)
    } else {
        Err(Error::NewtonDiverged { residual: r, iterations: max_iter })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fbm::{sample_fbm_vector, HurstVector, Method};
    use proptest::prelude::*;

    fn driver(h: f64, dim: usize, n: usize, t: f64, seed: u64) -> FbmVectorPath {
        let grid = TimeGrid::new(t, n).unwrap();
        let hv = HurstVector::uniform(h, dim).unwrap();
        sample_fbm_vector(&grid, &hv, StreamSeed::path(seed, 0), Method::default_for(n)).unwrap()
    }

    #[test]
    fn zero_drift_is_exact_shift() {
        let b = driver(0.7, 2, 64, 1.0, 3);
        let x = [0.3, -1.2];
        let p = forward_flow(&DriftField::zero(2), &b, 5, 64, &x, SolverOptions::default()).unwrap();
        for k in 5..=64 {
            for i in 0..2 {
                let want = x[i] + b.component(i).value(k) - b.component(i).value(5);
                assert_eq!(p.at(k)[i], want);
            }
        }
        let y = invert_pointwise(&DriftField::zero(1), &driver(0.3, 1, 64, 1.0, 4), 64, &[0.5], SolverOptions::default());
        let bt = driver(0.3, 1, 64, 1.0, 4).component(0).value(64);
        assert!((y.unwrap()[0] - (0.5 - bt)).abs() < 1e-14);
    }

    #[test]
    fn t_zero_is_identity() {
        let b = driver(0.6, 1, 16, 1.0, 1);
        let x = [0.7];
        assert_eq!(forward_endpoint(&DriftField::sin(), &b, 0, 0, &x, SolverOptions::default()).unwrap(), x);
        assert_eq!(inverse_endpoint(&DriftField::sin(), &b, 0, &x, SolverOptions::default()).unwrap(), x);
        let (p, j) = forward_with_jacobian(&DriftField::sin(), &b, 0, &x, SolverOptions::default()).unwrap();
        assert_eq!((p, j), (vec![0.7], vec![1.0]));
    }

    /// With a piecewise-linear driver and `b = λx`, each interval has the exact
    /// update `X ← e^{λΔ}X + (ΔB/Δ)(e^{λΔ} − 1)/λ`.
    #[test]
    fn linear_drift_matches_exponential_integrator() {
        for h in [0.5, 0.75] {
            let lambda = -0.8;
            let n = 256;
            let b = driver(h, 1, n, 1.0, 11);
            let grid = b.grid();
            let dt = grid.dt();
            let x0 = 1.3;
            let p = forward_flow(&DriftField::linear(lambda), &b, 0, n, &[x0], SolverOptions::default()).unwrap();
            let mut x = x0;
            let e = (lambda * dt).exp();
            for k in 0..n {
                let db = b.component(0).value(k + 1) - b.component(0).value(k);
                x = e * x + db / dt * (e - 1.0) / lambda;
                assert!((p.at(k + 1)[0] - x).abs() < 1e-9 * (1.0 + x.abs()), "H={h} k={k}");
            }
        }
    }

    #[test]
    fn composition_of_flows() {
        let b = driver(0.7, 1, 512, 1.0, 5);
        let o = SolverOptions::default();
        let d = DriftField::sin();
        let mid = forward_endpoint(&d, &b, 100, 300, &[0.4], o).unwrap();
        let two = forward_endpoint(&d, &b, 300, 512, &mid, o).unwrap();
        let one = forward_endpoint(&d, &b, 100, 512, &[0.4], o).unwrap();
        assert!((one[0] - two[0]).abs() < 1e-12);
        // the stored path agrees with the endpoint routine
        let p = forward_flow(&d, &b, 100, 512, &[0.4], o).unwrap();
        assert_eq!(p.at(300), &mid[..]);
    }

    #[test]
    fn roundtrip_sin_fine_grid() {
        let b = driver(0.7, 1, 4096, 1.0, 9);
        let o = SolverOptions::default();
        let d = DriftField::sin();
        for x in [-2.0, -0.3, 0.0, 1.1, 3.0] {
            let fwd = forward_endpoint(&d, &b, 0, 4096, &[x], o).unwrap();
            let back = inverse_endpoint(&d, &b, 4096, &fwd, o).unwrap();
            assert!((back[0] - x).abs() < 1e-4, "{x}: {}", back[0]);
            let back = inverse_endpoint(&d, &b, 4096, &[x], o).unwrap();
            let fwd = forward_endpoint(&d, &b, 0, 4096, &back, o).unwrap();
            assert!((fwd[0] - x).abs() < 1e-4);
        }
    }

    #[test]
    fn rotation_preserves_volume() {
        let b = driver(0.6, 2, 256, 1.0, 2);
        let v = flow_jacobian(&DriftField::rotation_2d(), &b, 256, &[0.5, -0.1], SolverOptions::default()).unwrap();
        for k in 0..=256 {
            assert!((v.determinant(k) - 1.0).abs() < 1e-6);
        }
        // the Jacobian of a linear field is the matrix exponential
        let (c, s) = (1.0f64.cos(), 1.0f64.sin());
        let j = v.endpoint();
        for (got, want) in j.iter().zip([c, -s, s, c]) {
            assert!((got - want).abs() < 1e-9);
        }
    }

    #[test]
    fn constant_derivative_gives_exponential_jacobian() {
        let b = driver(0.8, 1, 128, 2.0, 8);
        let (_, j) = forward_with_jacobian(&DriftField::linear(0.6), &b, 128, &[0.2], SolverOptions::default()).unwrap();
        assert!((j[0] - (1.2f64).exp()).abs() < 1e-9);
    }

    #[test]
    fn rk4_converges_with_substeps() {
        let b = driver(0.5, 1, 64, 1.0, 21);
        let d = DriftField::sin();
        let run = |m| forward_endpoint(&d, &b, 0, 64, &[0.9], SolverOptions::fixed(m)).unwrap()[0];
        let reference = run(256);
        let errs: Vec<f64> = [1, 2, 4].iter().map(|&m| (run(m) - reference).abs()).collect();
        let order = (errs[0] / errs[2]).log2() / 2.0;
        assert!(order >= 2.0, "observed order {order}, errors {errs:?}");
    }

    #[test]
    fn step_rejection_reports_time() {
        let b = driver(0.5, 1, 4, 1.0, 1);
        let stiff = DriftField::linear(-200.0);
        let o = SolverOptions { substeps: 1, rtol: Some(1e-14), max_refinements: 1 };
        match forward_endpoint(&stiff, &b, 0, 4, &[1.0], o) {
            Err(Error::StepRejected { time, .. }) => assert_eq!(time, 0.0),
            other => panic!("expected rejection, got {other:?}"),
        }
    }

    #[test]
    fn dimension_checks() {
        let b = driver(0.6, 1, 8, 1.0, 1);
        assert!(forward_endpoint(&DriftField::rotation_2d(), &b, 0, 8, &[0.0, 0.0], SolverOptions::default()).is_err());
        assert!(forward_endpoint(&DriftField::sin(), &b, 5, 2, &[0.0], SolverOptions::default()).is_err());
        assert!(forward_endpoint(&DriftField::sin(), &b, 0, 9, &[0.0], SolverOptions::default()).is_err());
    }

    #[test]
    fn inverse_path_layout_and_csv() {
        let b = driver(0.6, 1, 32, 1.0, 6);
        let o = SolverOptions::default();
        let p = inverse_flow(&DriftField::sin(), &b, 20, &[0.3], o).unwrap();
        assert_eq!(p.len(), 21);
        assert_eq!(p.value(0), &[0.3]);
        assert_eq!(p.endpoint(), &inverse_endpoint(&DriftField::sin(), &b, 20, &[0.3], o).unwrap()[..]);
        assert_eq!(p.y_at(20), &[0.3]);
        let csv = p.to_csv();
        assert!(csv.starts_with("u,value_1\n"));
        assert_eq!(csv.lines().count(), 22);
    }

    #[test]
    fn pointwise_inversion_agrees_with_backward_flow() {
        let o = SolverOptions::default();
        let b1 = driver(0.7, 1, 256, 1.0, 13);
        for y in [-1.0, 0.2, 2.5] {
            let a = invert_pointwise(&DriftField::sin(), &b1, 256, &[y], o).unwrap();
            let c = inverse_endpoint(&DriftField::sin(), &b1, 256, &[y], o).unwrap();
            assert!((a[0] - c[0]).abs() < 1e-6, "{a:?} vs {c:?}");
        }
        // unbounded drift: bracket must expand
        let lin = DriftField::linear(1.5);
        let a = invert_pointwise(&lin, &b1, 256, &[10.0], o).unwrap();
        let c = inverse_endpoint(&lin, &b1, 256, &[10.0], o).unwrap();
        assert!((a[0] - c[0]).abs() < 1e-6);
        let b2 = driver(0.6, 2, 128, 1.0, 14);
        let y = [0.4, -0.8];
        let a = invert_pointwise(&DriftField::rotation_2d(), &b2, 128, &y, o).unwrap();
        let c = inverse_endpoint(&DriftField::rotation_2d(), &b2, 128, &y, o).unwrap();
        assert!(a.iter().zip(&c).all(|(a, c)| (a - c).abs() < 1e-6), "{a:?} vs {c:?}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn scalar_flow_is_increasing(seed in 0u64..1000, x in -5.0f64..5.0, gap in 1e-3f64..2.0, h in 0.55f64..0.95) {
            let b = driver(h, 1, 64, 1.0, seed);
            let d = DriftField::sin();
            let o = SolverOptions::default();
            let lo = forward_endpoint(&d, &b, 0, 64, &[x], o).unwrap()[0];
            let hi = forward_endpoint(&d, &b, 0, 64, &[x + gap], o).unwrap()[0];
            prop_assert!(hi > lo);
        }

        #[test]
        fn roundtrip_holds_for_random_paths(seed in 0u64..1000, x in -3.0f64..3.0, h in 0.3f64..0.95) {
            let b = driver(h, 1, 128, 1.0, seed);
            let d = DriftField::sin();
            let o = SolverOptions::default();
            let y = forward_endpoint(&d, &b, 0, 128, &[x], o).unwrap();
            let back = inverse_endpoint(&d, &b, 128, &y, o).unwrap();
            prop_assert!((back[0] - x).abs() < 1e-4);
        }
    }
}
