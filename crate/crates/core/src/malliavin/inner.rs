use serde::Serialize;

use super::MalliavinTrace;
use crate::error::{domain, Error, Result};
use crate::fbm::{fgn_autocovariance, FbmVectorPath, TimeGrid};
use crate::flow::{inverse_flow, DriftField, SolverOptions};
use crate::transport::InitialDatum;

/// Piecewise-constant function on the cells `[kΔt, (k+1)Δt)` of a grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepFunction {
    dt: f64,
    cells: Vec<f64>,
}

impl StepFunction {
    pub fn new(dt: f64, cells: Vec<f64>) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return domain(format!("cell width must be positive, got {dt}"));
        }
        Ok(Self { dt, cells })
    }

    /// `1_{[a, b]}` on the first `n_cells` cells; `a` and `b` must be grid nodes.
    pub fn indicator(grid: &TimeGrid, a: f64, b: f64) -> Result<Self> {
        let (Some(i), Some(j)) = (grid.index_of(a), grid.index_of(b)) else {
            return Err(Error::GridMismatch(format!("indicator endpoints {a}, {b} must be grid nodes")));
        };
        if i > j {
            return domain(format!("indicator interval [{a}, {b}] is reversed"));
        }
        let mut cells = vec![0.0; grid.n_steps()];
        cells[i..j].fill(1.0);
        Self::new(grid.dt(), cells)
    }

    /// Cell values from node samples by averaging adjacent nodes.
    pub fn from_nodes(dt: f64, nodes: &[f64]) -> Result<Self> {
        Self::new(dt, nodes.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect())
    }

    pub fn from_trace(trace: &MalliavinTrace) -> Self {
        Self::from_nodes(trace.grid().dt(), trace.values()).expect("valid grid")
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn cells(&self) -> &[f64] {
        &self.cells
    }

    pub fn scale(&self, a: f64) -> Self {
        Self { dt: self.dt, cells: self.cells.iter().map(|v| a * v).collect() }
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        let (a, b) = aligned(self, other)?;
        Ok(Self { dt: self.dt, cells: a.iter().zip(&b).map(|(x, y)| x + y).collect() })
    }

    /// Merges pairs of cells (a zero cell is appended to odd lengths).
    fn coarsen(&self) -> Self {
        let cells = self.cells.chunks(2).map(|c| 0.5 * (c[0] + c.get(1).copied().unwrap_or(0.0))).collect();
        Self { dt: 2.0 * self.dt, cells }
    }
}

/// Inner product in the canonical Hilbert space together with a
/// discretisation error estimate `|I_n − I_{n/2}| / 3`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct InnerProductResult {
    pub value: f64,
    pub hurst: f64,
    pub quadrature_error_estimate: f64,
}

fn aligned(f: &StepFunction, g: &StepFunction) -> Result<(Vec<f64>, Vec<f64>)> {
    if (f.dt - g.dt).abs() > 1e-12 * f.dt {
        return Err(Error::GridMismatch(format!("cell widths {} and {} differ", f.dt, g.dt)));
    }
    let n = f.cells.len().max(g.cells.len());
    let pad = |c: &[f64]| {
        let mut v = c.to_vec();
        v.resize(n, 0.0);
        v
    };
    Ok((pad(&f.cells), pad(&g.cells)))
}

/// `⟨f, g⟩ = Σ_{i,j} f_i g_j ⟨1_i, 1_j⟩` with the exact cell pairing
/// `⟨1_i, 1_j⟩ = Δ^{2H} γ_H(|i − j|)`. For `H > 1/2` this is
/// `α_H ∬ f(u) g(v) |u − v|^{2H−2} du dv` integrated in closed form over each
/// cell pair; at `H = 1/2` it reduces to the `L²` pairing.
fn exact_pairing(f: &[f64], g: &[f64], dt: f64, h: f64) -> f64 {
    // grouped by lag so that swapping f and g reproduces the same bits
    let n = f.len();
    let mut total = 0.0;
    for k in 0..n {
        let mut c = 0.0;
        if k == 0 {
            for i in 0..n {
                c += f[i] * g[i];
            }
        } else {
            for i in 0..n - k {
                c += f[i] * g[i + k] + g[i] * f[i + k];
            }
        }
        total += fgn_autocovariance(k, h) * c;
    }
    total * dt.powf(2.0 * h)
}

pub fn h_inner_product(f: &StepFunction, g: &StepFunction, h: f64) -> Result<InnerProductResult> {
    if h < 0.5 {
        return Err(Error::Unsupported(format!("inner products need H ≥ 1/2, got {h}")));
    }
    if h >= 1.0 || h.is_nan() {
        return domain(format!("Hurst parameter must be below 1, got {h}"));
    }
    let (a, b) = aligned(f, g)?;
    let value = exact_pairing(&a, &b, f.dt, h);
    let quadrature_error_estimate = if a.len() >= 2 {
        let (fc, gc) = (f.coarsen(), g.coarsen());
        let (ac, bc) = aligned(&fc, &gc)?;
        (value - exact_pairing(&ac, &bc, fc.dt, h)).abs() / 3.0
    } else {
        0.0
    };
    Ok(InnerProductResult { value, hurst: h, quadrature_error_estimate })
}

/// `⟨D Y_{0,t}(x), D̃ Y_{0,t}(x)⟩` where the second trace is driven by the
/// coupled path.
pub fn cross_inner_product(
    drift: &DriftField,
    driving: &FbmVectorPath,
    coupled: &FbmVectorPath,
    t_index: usize,
    x: f64,
    opts: SolverOptions,
) -> Result<InnerProductResult> {
    cross_parts(drift, driving, coupled, t_index, x, opts).map(|p| p.0)
}

/// Chain-rule version for `u = u0 ∘ Y`:
/// `⟨D u(t,x), D̃ u(t,x)⟩ = u0′(Y) u0′(Ỹ) ⟨D Y, D̃ Y⟩`.
pub fn cross_inner_product_u(
    u0: &InitialDatum,
    drift: &DriftField,
    driving: &FbmVectorPath,
    coupled: &FbmVectorPath,
    t_index: usize,
    x: f64,
    opts: SolverOptions,
) -> Result<InnerProductResult> {
    let (r, y, y_tilde) = cross_parts(drift, driving, coupled, t_index, x, opts)?;
    let slope = |v| u0.derivative(v).ok_or_else(|| Error::Unsupported(format!("initial datum {} has no derivative", u0.name())));
    let w = slope(y)? * slope(y_tilde)?;
    Ok(InnerProductResult { value: w * r.value, quadrature_error_estimate: w.abs() * r.quadrature_error_estimate, ..r })
}

fn cross_parts(
    drift: &DriftField,
    driving: &FbmVectorPath,
    coupled: &FbmVectorPath,
    t_index: usize,
    x: f64,
    opts: SolverOptions,
) -> Result<(InnerProductResult, f64, f64)> {
    if driving.grid() != coupled.grid() {
        return Err(Error::GridMismatch("coupled path lives on a different grid".into()));
    }
    if driving.hurst() != coupled.hurst() || driving.dim() != 1 {
        return Err(Error::GridMismatch("coupled path must be one-dimensional with the same H".into()));
    }
    let h = driving.hurst().components()[0];
    let inv = inverse_flow(drift, driving, t_index, &[x], opts)?;
    let inv_tilde = inverse_flow(drift, coupled, t_index, &[x], opts)?;
    let f = StepFunction::from_trace(&MalliavinTrace::new(drift, &inv, 0)?);
    let g = StepFunction::from_trace(&MalliavinTrace::new(drift, &inv_tilde, 0)?);
    Ok((h_inner_product(&f, &g, h)?, inv.endpoint()[0], inv_tilde.endpoint()[0]))
}
