use rand_distr::{Distribution, Exp1};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{bootstrap_band, gaussian_envelope, EnvelopeParams, Kde};
use crate::error::{domain, Error, Result};
use crate::fbm::{FbmSampler, FbmVectorPath, Method, TimeGrid};
use crate::flow::{inverse_endpoint, DriftField, SolverOptions};
use crate::malliavin::{cross_inner_product_u, derivative_bound_constants, h_inner_product, StepFunction};
use crate::quadrature::trapezoid;
use crate::rng::{lane, stream_rng, StreamSeed};
use crate::stats::{mean, mean_abs_deviation, normal_pdf, variance, variance_standard_error};
use crate::tolerances::{BOOTSTRAP_LEVEL, MIN_DENSITY_SAMPLES};
use crate::transport::{InitialDatum, SolutionSample};

/// Parameters of a Monte Carlo density experiment for `u(t, x)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DensityConfig {
    pub t: f64,
    pub x: f64,
    pub hurst: f64,
    /// Horizon `T` of the driving paths; `t` must be a node of the grid on `[0, T]`.
    pub horizon: f64,
    pub n_steps: usize,
    pub n_samples: usize,
    pub seed: u64,
    /// Coupled triples for the almost-sure bound check (0 skips it).
    pub n_triples: usize,
    pub bootstrap_replicates: usize,
    pub kde_points: usize,
    pub solver: SolverOptions,
}

impl Default for DensityConfig {
    fn default() -> Self {
        Self {
            t: 1.0,
            x: 0.0,
            hurst: 0.5,
            horizon: 1.0,
            n_steps: 128,
            n_samples: 100_000,
            seed: 0,
            n_triples: 1000,
            bootstrap_replicates: 200,
            kde_points: 512,
            solver: SolverOptions::default(),
        }
    }
}

impl DensityConfig {
    fn setup(&self) -> Result<(FbmSampler, usize)> {
        if self.hurst < 0.5 {
            return Err(Error::Unsupported(format!("density experiments need H ≥ 1/2, got {}", self.hurst)));
        }
        let grid = TimeGrid::new(self.horizon, self.n_steps)?;
        let t_index = grid
            .index_of(self.t)
            .filter(|&k| k > 0)
            .ok_or_else(|| Error::GridMismatch(format!("t = {} is not a positive node of the grid on [0, {}]", self.t, self.horizon)))?;
        Ok((FbmSampler::new(grid, self.hurst, Method::default_for(self.n_steps))?, t_index))
    }
}

/// One row of the KDE-versus-envelope table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GridComparison {
    pub z: f64,
    pub kde: f64,
    pub lower: f64,
    pub upper: f64,
    pub band: f64,
    /// Inside `m ± 2γ_low`, where containment is asserted.
    pub central: bool,
    pub inside: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RegressionBin {
    pub f_center: f64,
    pub mean_inner: f64,
    pub count: usize,
}

/// Outcome of checking `⟨Du, D̃u⟩ ∈ [γ_low², γ_high²]` on coupled samples.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GfBoundReport {
    pub n: usize,
    pub inside: usize,
    pub fraction: f64,
    pub min: f64,
    pub max: f64,
    pub gamma_low_sq: f64,
    pub gamma_high_sq: f64,
    /// Binned `E[⟨Du, D̃u⟩ | u]`; diagnostic only.
    pub regression: Vec<RegressionBin>,
}

#[derive(Debug, Clone, Serialize)]
pub struct DensityReport {
    pub config: DensityConfig,
    pub drift: String,
    pub u0: String,
    pub envelope: EnvelopeParams,
    /// `‖1_{[0,t]}‖²` on the working grid (equal to `t^{2H}`).
    pub indicator_norm_sq: f64,
    pub bandwidth: f64,
    pub kde_mass: f64,
    pub sample_mean: f64,
    pub sample_variance: f64,
    pub sample_variance_se: f64,
    pub grid: Vec<GridComparison>,
    pub central_points: usize,
    pub central_violations: usize,
    /// Sup distance from the KDE to the exact law (zero drift only).
    pub reference_sup_distance: Option<f64>,
    /// Largest relative gap between the envelope curves and the exact law on
    /// the central region (zero drift only).
    pub envelope_reference_rel_error: Option<f64>,
    pub bound_check: Option<GfBoundReport>,
    pub warnings: Vec<String>,
    #[serde(skip)]
    pub samples: Vec<SolutionSample>,
}

impl DensityReport {
    /// `z,kde,lower,upper`.
    pub fn to_csv(&self) -> String {
        crate::io::csv_table(&["z", "kde", "lower", "upper"], self.grid.iter().map(|g| vec![g.z, g.kde, g.lower, g.upper]))
    }
}

/// `u(t, x)` along the path drawn from `seed`.
pub fn sample_solution(
    drift: &DriftField,
    u0: &InitialDatum,
    sampler: &FbmSampler,
    seed: StreamSeed,
    t_index: usize,
    x: f64,
    opts: SolverOptions,
) -> Result<SolutionSample> {
    let path = FbmVectorPath::from_scalar(sampler.sample(seed));
    let foot = inverse_endpoint(drift, &path, t_index, &[x], opts)?;
    Ok(SolutionSample { t: sampler.grid().node(t_index), x: vec![x], value: u0.value(&foot), seed, extrapolated: false })
}

fn batch(
    drift: &DriftField,
    u0: &InitialDatum,
    sampler: &FbmSampler,
    cfg: &DensityConfig,
    t_index: usize,
    lane_id: u64,
) -> Result<Vec<SolutionSample>> {
    (0..cfg.n_samples as u64)
        .into_par_iter()
        .map(|i| sample_solution(drift, u0, sampler, StreamSeed::new(cfg.seed, lane_id, i), t_index, cfg.x, cfg.solver))
        .collect()
}

/// Inverts a monotone datum by safeguarded Newton iteration.
fn invert_monotone(u0: &InitialDatum, z: f64, c: f64) -> f64 {
    // u0(v) − z changes sign within |v − v0| ≤ |u0(v0) − z| / c
    let v0 = z;
    let gap = (u0.value_1d(v0) - z).abs() / c;
    let (mut lo, mut hi) = (v0 - gap - 1e-12, v0 + gap + 1e-12);
    let mut v = v0;
    for _ in 0..200 {
        let f = u0.value_1d(v) - z;
        if f == 0.0 || hi - lo <= 4.0 * f64::EPSILON * (1.0 + v.abs()) {
            break;
        }
        if f < 0.0 {
            lo = v;
        } else {
            hi = v;
        }
        let d = u0.derivative(v).unwrap_or(c);
        let newton = v - f / d;
        v = if newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
    }
    v
}

/// Density of `u0(x − B_t)` with `B_t ~ N(0, σ²)`, for a monotone datum.
pub fn zero_drift_density(u0: &InitialDatum, x: f64, sigma: f64, z: f64) -> Result<f64> {
    let Some((c, _)) = u0.monotone_bounds() else {
        return Err(Error::Unsupported(format!("{} is not declared monotone", u0.name())));
    };
    let v = invert_monotone(u0, z, c);
    let slope = u0.derivative(v).ok_or_else(|| Error::Unsupported("datum without derivative".into()))?;
    Ok(normal_pdf(v, x, sigma) / slope)
}

fn gamma_bounds(drift: &DriftField, u0: &InitialDatum, cfg: &DensityConfig, grid: &TimeGrid, t_index: usize) -> Result<(f64, f64, f64)> {
    let Some((c, cc)) = u0.monotone_bounds() else {
        return Err(Error::Unsupported(format!("{} has no certified derivative bounds", u0.name())));
    };
    let norm = h_inner_product(&StepFunction::new(grid.dt(), vec![1.0; t_index])?, &StepFunction::new(grid.dt(), vec![1.0; t_index])?, cfg.hurst)?.value;
    let (lo, hi) = derivative_bound_constants(drift, cfg.horizon);
    Ok((c * c * lo * lo * norm, cc * cc * hi * hi * norm, norm))
}

/// Draws `u(t, x)` samples, estimates `m` and `E|u − m|` from an independent
/// batch, builds the KDE with a bootstrap band and compares it with the
/// Gaussian envelope.
pub fn run_density_experiment(drift: &DriftField, u0: &InitialDatum, cfg: &DensityConfig) -> Result<DensityReport> {
    if drift.dim() != 1 || u0.dim() != 1 {
        return Err(Error::Unsupported("density experiments are one-dimensional".into()));
    }
    if cfg.n_samples < 2 || cfg.kde_points < 2 {
        return domain("density.n_samples and density.kde_points must be at least 2");
    }
    let (sampler, t_index) = cfg.setup()?;
    let grid = *sampler.grid();
    let mut warnings = Vec::new();
    if cfg.n_samples < MIN_DENSITY_SAMPLES {
        warnings.push(format!("only {} samples; the envelope comparison is unreliable below {MIN_DENSITY_SAMPLES}", cfg.n_samples));
    }
    let (gamma_low_sq, gamma_high_sq, norm) = gamma_bounds(drift, u0, cfg, &grid, t_index)?;

    let samples = batch(drift, u0, &sampler, cfg, t_index, lane::PATH)?;
    let moments: Vec<f64> = batch(drift, u0, &sampler, cfg, t_index, lane::MOMENTS)?.iter().map(|s| s.value).collect();
    let m = mean(&moments);
    let envelope = EnvelopeParams::new(m, mean_abs_deviation(&moments, m), gamma_low_sq, gamma_high_sq)?;

    let values: Vec<f64> = samples.iter().map(|s| s.value).collect();
    let kde = Kde::silverman(&values)?;
    let zs = kde.grid(m, cfg.kde_points);
    let dens = kde.eval_grid(&zs);
    let band = if cfg.bootstrap_replicates >= 2 {
        bootstrap_band(&kde, &zs, cfg.bootstrap_replicates, BOOTSTRAP_LEVEL, 4096, cfg.seed)?
    } else {
        vec![0.0; zs.len()]
    };
    let reach = 2.0 * gamma_low_sq.sqrt();
    let grid_rows: Vec<GridComparison> = zs
        .iter()
        .zip(&dens)
        .zip(&band)
        .map(|((&z, &k), &b)| {
            let (lower, upper) = gaussian_envelope(&envelope, z);
            GridComparison { z, kde: k, lower, upper, band: b, central: (z - m).abs() <= reach, inside: k >= lower - b && k <= upper + b }
        })
        .collect();
    let central_points = grid_rows.iter().filter(|g| g.central).count();
    let central_violations = grid_rows.iter().filter(|g| g.central && !g.inside).count();

    let (reference_sup_distance, envelope_reference_rel_error) = if drift.is_zero() {
        let sigma = cfg.t.powf(cfg.hurst);
        let mut sup = 0.0f64;
        let mut rel = 0.0f64;
        for g in &grid_rows {
            let exact = zero_drift_density(u0, cfg.x, sigma, g.z)?;
            sup = sup.max((g.kde - exact).abs());
            if g.central {
                rel = rel.max((g.lower - exact).abs() / exact).max((g.upper - exact).abs() / exact);
            }
        }
        (Some(sup), Some(rel))
    } else {
        (None, None)
    };

    let bound_check = if cfg.n_triples > 0 { Some(verify_gf_bounds(drift, u0, cfg)?) } else { None };
    Ok(DensityReport {
        config: *cfg,
        drift: drift.name().to_string(),
        u0: u0.name().to_string(),
        envelope,
        indicator_norm_sq: norm,
        bandwidth: kde.bandwidth(),
        kde_mass: trapezoid(&dens, zs[1] - zs[0]),
        sample_mean: mean(&values),
        sample_variance: variance(&values),
        sample_variance_se: variance_standard_error(&values),
        grid: grid_rows,
        central_points,
        central_violations,
        reference_sup_distance,
        envelope_reference_rel_error,
        bound_check,
        warnings,
        samples,
    })
}

/// Samples `(θ, ω, ω′)` with `θ ~ Exp(1)`, couples `ω̃ = e^{−θ}ω + √(1−e^{−2θ})ω′`
/// and checks `⟨Du(t,x), D̃u(t,x)⟩ ∈ [γ_low², γ_high²]` with no tolerance.
pub fn verify_gf_bounds(drift: &DriftField, u0: &InitialDatum, cfg: &DensityConfig) -> Result<GfBoundReport> {
    let (sampler, t_index) = cfg.setup()?;
    let grid = *sampler.grid();
    let (gamma_low_sq, gamma_high_sq, _) = gamma_bounds(drift, u0, cfg, &grid, t_index)?;
    let draws: Vec<(f64, f64)> = (0..cfg.n_triples as u64)
        .into_par_iter()
        .map(|i| {
            let omega = FbmVectorPath::from_scalar(sampler.sample(StreamSeed::new(cfg.seed, lane::PATH, i)));
            let fresh = FbmVectorPath::from_scalar(sampler.sample(StreamSeed::new(cfg.seed, lane::FRESH, i)));
            let theta: f64 = Exp1.sample(&mut stream_rng(cfg.seed, lane::THETA, i));
            let coupled = omega.ou_couple(&fresh, theta)?;
            let inner = cross_inner_product_u(u0, drift, &omega, &coupled, t_index, cfg.x, cfg.solver)?.value;
            let f = u0.value(&inverse_endpoint(drift, &omega, t_index, &[cfg.x], cfg.solver)?);
            Ok((f, inner))
        })
        .collect::<Result<_>>()?;
    let inside = draws.iter().filter(|(_, v)| *v >= gamma_low_sq && *v <= gamma_high_sq).count();
    let n = draws.len();
    let mut sorted = draws.clone();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let bins = 10.min(n);
    let regression = (0..bins)
        .map(|b| {
            let chunk = &sorted[b * n / bins..(b + 1) * n / bins];
            RegressionBin {
                f_center: mean(&chunk.iter().map(|p| p.0).collect::<Vec<_>>()),
                mean_inner: mean(&chunk.iter().map(|p| p.1).collect::<Vec<_>>()),
                count: chunk.len(),
            }
        })
        .collect();
    Ok(GfBoundReport {
        n,
        inside,
        fraction: if n > 0 { inside as f64 / n as f64 } else { 1.0 },
        min: draws.iter().map(|p| p.1).fold(f64::INFINITY, f64::min),
        max: draws.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max),
        gamma_low_sq,
        gamma_high_sq,
        regression,
    })
}
