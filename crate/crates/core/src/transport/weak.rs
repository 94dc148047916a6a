use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{symmetric_integral, InitialDatum, SymmetricIntegral, TestFunction};
use crate::error::{domain, Error, Result};
use crate::fbm::FbmVectorPath;
use crate::flow::{flow_jacobian, forward_flow, DriftField, SolverOptions};
use crate::quadrature::{simpson_weights, trapezoid};

/// Discretisation of the weak-form check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeakFormParams {
    /// Number of spatial nodes (odd, for Simpson).
    pub n_x: usize,
    /// `ε / Δt`; a multiple of 4 so that `ε/4` stays on the grid.
    pub epsilon_steps: usize,
    /// Padding of the spatial window, in units of `‖b‖∞ t + max|B|`.
    pub padding_factor: f64,
}

impl Default for WeakFormParams {
    fn default() -> Self {
        Self { n_x: 2049, epsilon_steps: 4, padding_factor: 4.0 }
    }
}

/// The five terms of the weak identity
/// `∫u(t)φ = ∫u0 φ + ∫∫u b φ′ + ∫∫u b′ φ + ∫∫u φ′ d°B`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WeakTerms {
    pub lhs: f64,
    pub initial: f64,
    pub drift: f64,
    pub divergence: f64,
    pub noise: f64,
}

impl WeakTerms {
    pub fn residual(&self) -> f64 {
        self.lhs - self.initial - self.drift - self.divergence - self.noise
    }

    pub fn scale(&self) -> f64 {
        [self.lhs, self.initial, self.drift, self.divergence, self.noise].iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeakFormReport {
    pub terms: WeakTerms,
    pub noise_integral: SymmetricIntegral,
    pub residual: f64,
    /// Largest term magnitude.
    pub scale: f64,
    /// `|residual| / scale` (zero when every term vanishes).
    pub relative: f64,
    pub dt: f64,
    pub dx: f64,
    pub epsilon: f64,
    pub x_window: (f64, f64),
    pub warnings: Vec<String>,
}

/// Accumulated spatial integrals per time node.
struct Partial {
    lhs: f64,
    initial: f64,
    drift: Vec<f64>,
    divergence: Vec<f64>,
    noise: Vec<f64>,
}

impl Partial {
    fn zeros(n: usize) -> Self {
        Self { lhs: 0.0, initial: 0.0, drift: vec![0.0; n], divergence: vec![0.0; n], noise: vec![0.0; n] }
    }

    fn add(&mut self, other: &Partial) {
        self.lhs += other.lhs;
        self.initial += other.initial;
        for (a, b) in [(&mut self.drift, &other.drift), (&mut self.divergence, &other.divergence), (&mut self.noise, &other.noise)] {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }
}

const CHUNK: usize = 16;

/// Evaluates both sides of the weak formulation for the characteristic
/// solution `u(s, x) = u0(Y_{0,s}(x))` in one dimension.
///
/// Spatial integrals are taken in Lagrangian coordinates,
/// `∫ u(s,x) g(x) dx = ∫ u0(z) g(X_{0,s}(z)) ∂_z X_{0,s}(z) dz`, with Simpson's
/// rule on a uniform `z` window covering `supp φ` padded by
/// `padding_factor · (‖b‖∞ t + max|B|)`. Time integrals use the trapezoid rule
/// and the noise term the extrapolated ε-symmetric integral.
pub fn weak_form_residual(
    u0: &InitialDatum,
    drift: &DriftField,
    driving: &FbmVectorPath,
    phi: &TestFunction,
    t_index: usize,
    params: WeakFormParams,
    opts: SolverOptions,
) -> Result<WeakFormReport> {
    if drift.dim() != 1 || driving.dim() != 1 || u0.dim() != 1 {
        return Err(Error::Unsupported("the weak formulation is checked in one dimension only".into()));
    }
    if params.n_x < 3 || params.n_x.is_multiple_of(2) {
        return domain(format!("weak.n_x must be odd and at least 3, got {}", params.n_x));
    }
    if !(params.padding_factor >= 0.0) {
        return domain("weak.padding_factor must be nonnegative");
    }
    let grid = driving.grid();
    if t_index == 0 || t_index > grid.n_steps() {
        return domain(format!("weak-form time node {t_index} outside (0, {}]", grid.n_steps()));
    }
    let dt = grid.dt();
    let t = grid.node(t_index);
    let epsilon = params.epsilon_steps as f64 * dt;
    let b = driving.component(0).values();
    let b_path = &b[..=t_index];
    let max_b = b_path.iter().map(|v| (v - b[0]).abs()).fold(0.0, f64::max);

    let (lo, hi) = phi.support();
    let travel = match drift.sup_norm_b() {
        Some(s) => s * t,
        // linear growth bound |b(x)| ≤ |b(0)| + ‖b′‖ |x| on the window
        None => t * (drift.eval_1d(0.0, 0.0).abs() + drift.sup_norm_b_prime() * (lo.abs().max(hi.abs()) + max_b)),
    };
    let pad = params.padding_factor * (travel + max_b);
    let (z_lo, z_hi) = (lo - pad, hi + pad);
    let dx = (z_hi - z_lo) / (params.n_x - 1) as f64;
    let weights = simpson_weights(params.n_x, dx);

    let mut warnings = Vec::new();
    let edge_lo = forward_flow(drift, driving, 0, t_index, &[z_lo], opts)?;
    let edge_hi = forward_flow(drift, driving, 0, t_index, &[z_hi], opts)?;
    let reach_lo = (0..=t_index).map(|k| edge_lo.at(k)[0]).fold(f64::NEG_INFINITY, f64::max);
    let reach_hi = (0..=t_index).map(|k| edge_hi.at(k)[0]).fold(f64::INFINITY, f64::min);
    if reach_lo > lo || reach_hi < hi {
        warnings.push(format!(
            "support truncation: characteristics from [{z_lo:.4}, {z_hi:.4}] cover only [{reach_lo:.4}, {reach_hi:.4}] of supp φ = [{lo}, {hi}]"
        ));
    }

    let nodes = t_index + 1;
    let indices: Vec<usize> = (0..params.n_x).collect();
    let partials: Vec<Result<Partial>> = indices
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut acc = Partial::zeros(nodes);
            for &j in chunk {
                let z = z_lo + j as f64 * dx;
                let w = weights[j] * u0.value_1d(z);
                if w == 0.0 {
                    continue;
                }
                acc.initial += w * phi.value(z);
                let v = flow_jacobian(drift, driving, t_index, &[z], opts)?;
                let path = v.flow();
                for k in 0..nodes {
                    let x = path.at(k)[0];
                    if x <= lo || x >= hi {
                        continue;
                    }
                    let wj = w * v.at(k)[0];
                    let s = grid.node(k);
                    let dphi = phi.derivative(x);
                    let val = phi.value(x);
                    acc.drift[k] += wj * drift.eval_1d(s, x) * dphi;
                    acc.divergence[k] += wj * drift.derivative_1d(s, x) * val;
                    acc.noise[k] += wj * dphi;
                    if k == t_index {
                        acc.lhs += wj * val;
                    }
                }
            }
            Ok(acc)
        })
        .collect();
    let mut total = Partial::zeros(nodes);
    for p in partials {
        total.add(&p?);
    }

    let noise_integral = symmetric_integral(&total.noise, b_path, dt, epsilon)?;
    let terms = WeakTerms {
        lhs: total.lhs,
        initial: total.initial,
        drift: trapezoid(&total.drift, dt),
        divergence: trapezoid(&total.divergence, dt),
        noise: noise_integral.extrapolated,
    };
    let residual = terms.residual();
    let scale = terms.scale();
    Ok(WeakFormReport {
        terms,
        noise_integral,
        residual,
        scale,
        relative: if scale > 0.0 { residual.abs() / scale } else { 0.0 },
        dt,
        dx,
        epsilon,
        x_window: (z_lo, z_hi),
        warnings,
    })
}
