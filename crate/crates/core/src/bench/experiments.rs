//! The six experiments. Each returns its checks, scalar results and CSV
//! artifacts; nothing here touches the file system.

use nalgebra::DMatrix;
use rand::Rng;
use rayon::prelude::*;
use serde_json::json;

use super::{ExperimentConfig, Outcome};
use crate::density::{
    explicit_density_divfree, run_density_experiment, DensityConfig, Diffeomorphism, Kde2d, LinearCharacteristicDensity,
    VectorReaction,
};
use crate::error::{Error, Result};
use crate::fbm::{covariance, gram_matrix, sample_fbm, sample_fbm_vector, FbmSampler, FbmVectorPath, HurstVector, Method, TimeGrid, VectorSampler};
use crate::flow::{forward_endpoint, forward_flow, inverse_endpoint, inverse_flow, DriftField, SolverOptions};
use crate::io::csv_table;
use crate::malliavin::{cross_inner_product, derivative_bound_constants, derivative_y, h_inner_product, MalliavinTrace, StepFunction};
use crate::presets;
use crate::quadrature::simpson_weights;
use crate::rng::{lane, stream_rng, StreamSeed};
use crate::tolerances::*;
use crate::transport::{symmetric_integral, weak_form_residual, TestFunction, WeakFormParams};

use super::Experiment;

pub(crate) fn execute(cfg: &ExperimentConfig) -> Result<Outcome> {
    match cfg.experiment {
        Experiment::FbmValidate => fbm_validate(cfg),
        Experiment::FlowRoundtrip => flow_roundtrip(cfg),
        Experiment::WeakResidual => weak_residual(cfg),
        Experiment::MalliavinBounds => malliavin_bounds(cfg),
        Experiment::DensityEnvelope => density_envelope(cfg),
        Experiment::ExplicitDensity => explicit_density(cfg),
    }
}

fn label(h: f64) -> String {
    format!("H{h}")
}

fn bool01(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

/// Empirical second moments of the nodes `t_1..t_n` (lower triangle,
/// row-major), summed in a fixed order.
fn second_moments(sampler: &FbmSampler, base: u64, n_paths: usize) -> Vec<f64> {
    const CHUNK: usize = 256;
    let n = sampler.grid().n_steps();
    let tri = n * (n + 1) / 2;
    let chunks: Vec<u64> = (0..n_paths.div_ceil(CHUNK) as u64).collect();
    let partials: Vec<Vec<f64>> = chunks
        .par_iter()
        .map(|&c| {
            let mut acc = vec![0.0; tri];
            let first = c * CHUNK as u64;
            let last = (first + CHUNK as u64).min(n_paths as u64);
            for i in first..last {
                let path = sampler.sample(StreamSeed::path(base, i));
                let v = &path.values()[1..];
                let mut k = 0;
                for (a, &va) in v.iter().enumerate() {
                    for &vb in &v[..=a] {
                        acc[k] += va * vb;
                        k += 1;
                    }
                }
            }
            acc
        })
        .collect();
    let mut total = vec![0.0; tri];
    for p in &partials {
        for (t, v) in total.iter_mut().zip(p) {
            *t += v;
        }
    }
    let inv = 1.0 / n_paths as f64;
    total.iter_mut().for_each(|v| *v *= inv);
    total
}

fn fbm_validate(cfg: &ExperimentConfig) -> Result<Outcome> {
    let s = &cfg.fbm;
    let grid = TimeGrid::new(s.horizon, s.n_steps)?;
    let n = s.n_steps;
    let mut out = Outcome::default();
    let mut summary = Vec::new();
    let mut per_h = serde_json::Map::new();
    for &h in &s.hurst {
        let sampler = FbmSampler::new(grid, h, s.method)?;
        for note in sampler.notes() {
            out.notes.push(format!("{}: {}", label(h), serde_json::to_string(note).expect("note serializes")));
        }
        // Gram entries: the product of two centred Gaussians has variance
        // G_ii G_jj + G_ij², so the standard error needs no estimate.
        let moments = second_moments(&sampler, cfg.seed, s.n_paths);
        let g = gram_matrix(&grid, h)?;
        let (mut exceed, mut max_z, mut k) = (0usize, 0.0f64, 0usize);
        for a in 0..n {
            for b in 0..=a {
                let r = g[(a, b)];
                let se = ((g[(a, a)] * g[(b, b)] + r * r) / s.n_paths as f64).sqrt();
                let z = (moments[k] - r).abs() / se;
                if z > MC_SIGMAS {
                    exceed += 1;
                }
                max_z = max_z.max(z);
                k += 1;
            }
        }
        // Var(B_t − B_s) = R(t,t) + R(s,s) − 2R(t,s) against |t − s|^{2H}
        let nodes = grid.nodes();
        let mut incr = 0.0f64;
        for (i, &t) in nodes.iter().enumerate() {
            for &u in &nodes[..i] {
                let var = covariance(t, t, h)? + covariance(u, u, h)? - 2.0 * covariance(t, u, h)?;
                let scale = t.powf(2.0 * h) + u.powf(2.0 * h);
                incr = incr.max((var - (t - u).abs().powf(2.0 * h)).abs() / scale);
            }
        }
        out.check_le(format!("gram_within_3se_{}", label(h)), max_z, MC_SIGMAS);
        out.check_le(format!("increment_identity_{}", label(h)), incr, FORMULA_ROUNDOFF);
        summary.push(vec![h, (n * (n + 1) / 2) as f64, exceed as f64, max_z, incr]);
        per_h.insert(label(h), json!({ "entries": n * (n + 1) / 2, "exceedances": exceed, "max_z": max_z, "increment_max_error": incr }));
        out.artifact(format!("path_{}.csv", label(h)), sampler.sample(StreamSeed::path(cfg.seed, 0)).to_csv());
    }
    out.result("method", s.method);
    out.result("per_hurst", per_h);
    out.artifact("gram_check.csv", csv_table(&["H", "entries", "exceedances", "max_z", "increment_max_error"], summary));
    Ok(out)
}

fn drift_consistency(out: &mut Outcome, drift: &DriftField, lo: f64, hi: f64, horizon: f64) {
    let pts: Vec<(f64, Vec<f64>)> = (0..64)
        .map(|i| {
            let w = i as f64 / 63.0;
            (horizon * w, vec![lo + (hi - lo) * ((7 * i) % 64) as f64 / 63.0; drift.dim()])
        })
        .collect();
    let report = drift.check_consistency(&pts);
    out.check_le("drift_derivative_consistency", report.max_relative_mismatch, DRIFT_FD_RTOL);
    out.check_le("drift_certified_bound", report.max_jacobian_norm, drift.sup_norm_b_prime());
}

fn flow_roundtrip(cfg: &ExperimentConfig) -> Result<Outcome> {
    let s = &cfg.flow;
    let drift = presets::drift(&s.drift, 1, s.lambda)?;
    let opts = SolverOptions { substeps: s.substeps, rtol: Some(s.rtol), max_refinements: s.max_refinements };
    let grid = TimeGrid::new(s.horizon, s.n_steps)?;
    let n = s.n_steps;
    let mid = n / 2;
    let xs: Vec<f64> = (0..s.n_points)
        .map(|k| if s.n_points == 1 { s.x_min } else { s.x_min + (s.x_max - s.x_min) * k as f64 / (s.n_points - 1) as f64 })
        .collect();
    let mut out = Outcome::default();
    drift_consistency(&mut out, &drift, s.x_min, s.x_max, s.horizon);
    let mut rows = Vec::new();
    let mut per_h = serde_json::Map::new();
    for (hi, &h) in s.hurst.iter().enumerate() {
        let path = sample_fbm_vector(&grid, &HurstVector::uniform(h, 1)?, StreamSeed::new(cfg.seed, lane::PATH, hi as u64), Method::default_for(n))?;
        let errs: Vec<(f64, f64, f64)> = xs
            .par_iter()
            .map(|&x| {
                let y = inverse_endpoint(&drift, &path, n, &[x], opts)?;
                let back = forward_endpoint(&drift, &path, 0, n, &y, opts)?;
                let full = forward_endpoint(&drift, &path, 0, n, &[x], opts)?;
                let half = forward_endpoint(&drift, &path, 0, mid, &[x], opts)?;
                let composed = forward_endpoint(&drift, &path, mid, n, &half, opts)?;
                Ok((y[0], (back[0] - x).abs(), (composed[0] - full[0]).abs() / (1.0 + full[0].abs())))
            })
            .collect::<Result<_>>()?;
        let rt = errs.iter().map(|e| e.1).fold(0.0, f64::max);
        let comp = errs.iter().map(|e| e.2).fold(0.0, f64::max);
        out.check_lt(format!("roundtrip_{}", label(h)), rt, ROUNDTRIP);
        out.check_le(format!("composition_{}", label(h)), comp, 2.0 * s.rtol);
        per_h.insert(label(h), json!({ "max_roundtrip_error": rt, "max_composition_error": comp }));
        for (x, e) in xs.iter().zip(&errs) {
            rows.push(vec![h, *x, e.0, e.1, e.2]);
        }
        out.artifact(format!("forward_{}.csv", label(h)), forward_flow(&drift, &path, 0, n, &[xs[0]], opts)?.to_csv());
        out.artifact(format!("inverse_{}.csv", label(h)), inverse_flow(&drift, &path, n, &[xs[0]], opts)?.to_csv());
    }
    out.result("drift", drift.name());
    out.result("composition_split_time", grid.node(mid));
    out.result("per_hurst", per_h);
    out.artifact("roundtrip.csv", csv_table(&["H", "x", "y", "roundtrip_error", "composition_error"], rows));
    Ok(out)
}

fn weak_residual(cfg: &ExperimentConfig) -> Result<Outcome> {
    let s = &cfg.weak;
    let drift = presets::drift(&s.drift, 1, s.lambda)?;
    let u0 = presets::initial_datum(&s.u0)?;
    let phi = TestFunction::new(s.phi_center, s.phi_radius)?;
    let finest = *s.levels.iter().max().expect("validated");
    let grid = TimeGrid::new(s.horizon, finest)?;
    let hv = HurstVector::uniform(s.hurst, 1)?;
    let params = WeakFormParams { n_x: s.n_x, epsilon_steps: s.epsilon_steps, padding_factor: s.padding_factor };
    let opts = SolverOptions::default();
    let mut out = Outcome::default();

    let mut rows = Vec::new();
    let mut relative = vec![vec![0.0; s.levels.len()]; s.n_paths];
    for p in 0..s.n_paths {
        let fine = sample_fbm_vector(&grid, &hv, StreamSeed::new(cfg.seed, lane::PATH, p as u64), Method::default_for(finest))?;
        for (li, &level) in s.levels.iter().enumerate() {
            let path = fine.coarsen(finest / level)?;
            let r = weak_form_residual(&u0, &drift, &path, &phi, level, params, opts)?;
            for w in &r.warnings {
                out.notes.push(format!("path {p}, n = {level}: {w}"));
            }
            let t = &r.terms;
            rows.push(vec![p as f64, level as f64, r.dt, t.lhs, t.initial, t.drift, t.divergence, t.noise, r.residual, r.scale, r.relative]);
            relative[p][li] = r.relative;
        }
    }
    let rms: Vec<f64> = (0..s.levels.len())
        .map(|li| (relative.iter().map(|r| r[li] * r[li]).sum::<f64>() / s.n_paths as f64).sqrt())
        .collect();
    let worst_ratio = rms.windows(2).map(|w| w[1] / w[0]).fold(0.0, f64::max);
    let final_max = relative.iter().map(|r| *r.last().expect("levels")).fold(0.0, f64::max);
    let non_monotone = relative.iter().flat_map(|r| r.windows(2)).filter(|w| w[1] >= w[0]).count();
    out.check_lt("weak_rms_decreasing", worst_ratio, 1.0);
    out.check_lt("weak_final_relative", final_max, WEAK_RESIDUAL_REL);

    // Stratonovich identity ∫X∘dX = (X_T² − X_0²)/2 on a finer grid
    let sgrid = TimeGrid::new(s.horizon, s.stratonovich_steps)?;
    let eps = s.epsilon_steps as f64 * sgrid.dt();
    let mut strat_rows = Vec::new();
    let mut strat_max = 0.0f64;
    for p in 0..s.stratonovich_paths {
        let path = sample_fbm(&sgrid, s.hurst, StreamSeed::new(cfg.seed, lane::FRESH, p as u64), Method::default_for(s.stratonovich_steps))?;
        let x = path.values();
        let si = symmetric_integral(x, x, sgrid.dt(), eps)?;
        let exact = 0.5 * (x[x.len() - 1].powi(2) - x[0].powi(2));
        let err = (si.extrapolated - exact).abs();
        strat_max = strat_max.max(err);
        strat_rows.push(vec![p as f64, s.stratonovich_steps as f64, eps, si.raw[0], si.raw[1], si.raw[2], si.extrapolated, exact, err]);
    }
    out.check_le("stratonovich_identity", strat_max, STRATONOVICH);

    out.result("levels", &s.levels);
    out.result("rms_relative", &rms);
    out.result("worst_rms_ratio", worst_ratio);
    out.result("final_relative_max", final_max);
    out.result("per_path_non_monotone_steps", non_monotone);
    out.result("stratonovich_max_error", strat_max);
    out.artifact(
        "weak_residual.csv",
        csv_table(&["path", "n", "dt", "lhs", "initial", "drift", "divergence", "noise", "residual", "scale", "relative"], rows),
    );
    out.artifact("weak_rms.csv", csv_table(&["n", "rms_relative"], s.levels.iter().zip(&rms).map(|(&l, &r)| vec![l as f64, r])));
    out.artifact(
        "stratonovich.csv",
        csv_table(&["path", "n", "epsilon", "raw_eps", "raw_eps_half", "raw_eps_quarter", "extrapolated", "exact", "error"], strat_rows),
    );
    Ok(out)
}

fn malliavin_bounds(cfg: &ExperimentConfig) -> Result<Outcome> {
    let s = &cfg.malliavin;
    let drift = presets::drift(&s.drift, 1, s.lambda)?;
    let grid = TimeGrid::new(s.horizon, s.n_steps)?;
    let n = s.n_steps;
    let opts = SolverOptions::default();
    let (lo, hi) = derivative_bound_constants(&drift, s.horizon);
    let (lower, upper) = (-hi, -lo);
    let mut out = Outcome::default();
    let mut pair_rows = Vec::new();
    let mut per_h = serde_json::Map::new();
    for (hidx, &h) in s.hurst.iter().enumerate() {
        let sampler = FbmSampler::new(grid, h, Method::default_for(n))?;
        let draws: Vec<(f64, f64, f64)> = (0..s.n_pairs as u64)
            .into_par_iter()
            .map(|i| {
                let index = ((hidx as u64) << 32) | i;
                let path = FbmVectorPath::from_scalar(sampler.sample(StreamSeed::new(cfg.seed, lane::PATH, index)));
                let mut rng = stream_rng(cfg.seed, lane::ALPHA, index);
                let x = if s.x_min < s.x_max { rng.random_range(s.x_min..=s.x_max) } else { s.x_min };
                let alpha = grid.node(rng.random_range(0..=n));
                let inv = inverse_flow(&drift, &path, n, &[x], opts)?;
                Ok((x, alpha, derivative_y(&drift, &inv, 0, n, alpha)?))
            })
            .collect::<Result<_>>()?;
        let violations = draws.iter().filter(|d| !(d.2 >= lower && d.2 <= upper)).count();
        let min = draws.iter().map(|d| d.2).fold(f64::INFINITY, f64::min);
        let max = draws.iter().map(|d| d.2).fold(f64::NEG_INFINITY, f64::max);
        out.check_le(format!("derivative_bound_violations_{}", label(h)), violations as f64, 0.0);
        per_h.insert(label(h), json!({ "pairs": draws.len(), "violations": violations, "min": min, "max": max }));
        pair_rows.extend(draws.iter().map(|d| vec![h, d.0, d.1, d.2, lower, upper]));

        let path = FbmVectorPath::from_scalar(sampler.sample(StreamSeed::new(cfg.seed, lane::PATH, (hidx as u64) << 32)));
        let inv = inverse_flow(&drift, &path, n, &[0.0], opts)?;
        let trace = MalliavinTrace::new(&drift, &inv, 0)?;
        out.artifact(
            format!("trace_{}.csv", label(h)),
            csv_table(&["alpha", "value"], trace.values().iter().enumerate().map(|(k, &v)| vec![grid.node(k), v])),
        );
    }

    // indicator identities ⟨1_[0,s], 1_[0,t]⟩ = R_H(s, t)
    let igrid = TimeGrid::new(1.0, s.inner_n_steps)?;
    let m = s.inner_n_steps;
    let marks: Vec<f64> = [m / 4, m / 2, 3 * m / 4, m].iter().filter(|&&k| k > 0).map(|&k| igrid.node(k)).collect();
    let mut ind_rows = Vec::new();
    let mut cross_rows = Vec::new();
    let zero = DriftField::zero(1);
    let t_index = igrid.index_of(s.cross_t).ok_or_else(|| Error::GridMismatch(format!("cross_t = {} is not a grid node", s.cross_t)))?;
    for (hidx, &h) in s.inner_hurst.iter().enumerate() {
        let mut worst = 0.0f64;
        for (i, &a) in marks.iter().enumerate() {
            for &b in &marks[i..] {
                let f = StepFunction::indicator(&igrid, 0.0, a)?;
                let g = StepFunction::indicator(&igrid, 0.0, b)?;
                let got = h_inner_product(&f, &g, h)?.value;
                let exact = covariance(a, b, h)?;
                let rel = (got - exact).abs() / exact.abs();
                worst = worst.max(rel);
                ind_rows.push(vec![h, a, b, got, exact, rel]);
            }
        }
        out.check_le(format!("indicator_identity_{}", label(h)), worst, INDICATOR_REL);

        // zero drift: both traces are −1 on [0, t], so the product is t^{2H}
        let sampler = FbmSampler::new(igrid, h, Method::default_for(m))?;
        let index = (hidx as u64) << 32;
        let omega = FbmVectorPath::from_scalar(sampler.sample(StreamSeed::new(cfg.seed, lane::PATH, index)));
        let fresh = FbmVectorPath::from_scalar(sampler.sample(StreamSeed::new(cfg.seed, lane::FRESH, index)));
        let coupled = omega.ou_couple(&fresh, 0.5)?;
        let r = cross_inner_product(&zero, &omega, &coupled, t_index, 0.3, opts)?;
        let exact = s.cross_t.powf(2.0 * h);
        let rel = (r.value - exact).abs() / exact;
        out.check_le(format!("cross_zero_drift_{}", label(h)), rel, CROSS_ZERO_DRIFT);
        cross_rows.push(vec![h, s.cross_t, r.value, exact, rel, r.quadrature_error_estimate]);
    }
    out.result("drift", drift.name());
    out.result("bounds", json!({ "lower": lower, "upper": upper }));
    out.result("per_hurst", per_h);
    out.artifact("derivative_pairs.csv", csv_table(&["H", "x", "alpha", "value", "lower", "upper"], pair_rows));
    out.artifact("indicators.csv", csv_table(&["H", "s", "t", "computed", "exact", "rel_error"], ind_rows));
    out.artifact("cross_zero_drift.csv", csv_table(&["H", "t", "computed", "exact", "rel_error", "quadrature_error_estimate"], cross_rows));
    Ok(out)
}

fn density_envelope(cfg: &ExperimentConfig) -> Result<Outcome> {
    let s = &cfg.density;
    let drift = presets::drift(&s.drift, 1, s.lambda)?;
    let u0 = presets::initial_datum(&s.u0)?;
    let dc = DensityConfig {
        t: s.t,
        x: s.x,
        hurst: s.hurst,
        horizon: s.horizon,
        n_steps: s.n_steps,
        n_samples: s.n_samples,
        seed: cfg.density_seed(),
        n_triples: s.n_triples,
        bootstrap_replicates: s.bootstrap_replicates,
        kde_points: s.kde_points,
        solver: SolverOptions { rtol: Some(s.rtol), ..SolverOptions::default() },
    };
    let report = run_density_experiment(&drift, &u0, &dc)?;
    let mut out = Outcome::default();
    out.check_le("kde_mass", (report.kde_mass - 1.0).abs(), KDE_NORMALIZATION);
    if drift.is_zero() && u0.name() == "identity" {
        // u(t, x) − x = −B_t has variance t^{2H}
        let exact = s.t.powf(2.0 * s.hurst);
        out.check_le("variance_within_3se", (report.sample_variance - exact).abs() / report.sample_variance_se, MC_SIGMAS);
    }
    if let Some(sup) = report.reference_sup_distance {
        out.check_lt("kde_sup_distance_exact_law", sup, KDE_SUP_NORMAL);
    }
    let collapsed = u0.monotone_bounds().is_some_and(|(c, cc)| c == cc);
    if let (Some(rel), true) = (report.envelope_reference_rel_error, collapsed) {
        out.check_lt("envelope_collapse", rel, ENVELOPE_COLLAPSE_REL);
    }
    if !drift.is_zero() && s.bootstrap_replicates > 0 {
        out.check_le("envelope_containment_violations", report.central_violations as f64, 0.0);
    }
    if let Some(b) = &report.bound_check {
        out.check_ge("gf_bounds_fraction", b.fraction, 1.0);
        out.artifact(
            "gf_regression.csv",
            csv_table(&["f_center", "mean_inner", "count"], b.regression.iter().map(|r| vec![r.f_center, r.mean_inner, r.count as f64])),
        );
    }
    out.notes.extend(report.warnings.iter().cloned());
    out.result("drift", &report.drift);
    out.result("u0", &report.u0);
    out.result("seed", dc.seed);
    out.result("envelope", report.envelope);
    out.result("indicator_norm_sq", report.indicator_norm_sq);
    out.result("bandwidth", report.bandwidth);
    out.result("kde_mass", report.kde_mass);
    out.result("sample_mean", report.sample_mean);
    out.result("sample_variance", report.sample_variance);
    out.result("sample_variance_se", report.sample_variance_se);
    out.result("central_points", report.central_points);
    out.result("central_violations", report.central_violations);
    out.result("reference_sup_distance", report.reference_sup_distance);
    out.result("envelope_reference_rel_error", report.envelope_reference_rel_error);
    if let Some(b) = &report.bound_check {
        out.result(
            "bound_check",
            json!({ "n": b.n, "inside": b.inside, "fraction": b.fraction, "min": b.min, "max": b.max, "gamma_low_sq": b.gamma_low_sq, "gamma_high_sq": b.gamma_high_sq }),
        );
    }
    out.result("extrapolated", false);
    out.artifact("density.csv", report.to_csv());
    out.artifact(
        "density_table.csv",
        csv_table(
            &["z", "kde", "lower", "upper", "band", "central", "inside"],
            report.grid.iter().map(|g| vec![g.z, g.kde, g.lower, g.upper, g.band, bool01(g.central), bool01(g.inside)]),
        ),
    );
    Ok(out)
}

/// Law of `u = e^{Kt} L Y` with `Y ~ N(R(t)ᵀx, tI)`, where `R(t)` is the
/// rotation by angle `t` (or the identity without drift): mean and covariance.
fn explicit_gaussian_law(rotate: bool, l: &DMatrix<f64>, k: &DMatrix<f64>, t: f64, x: [f64; 2]) -> ([f64; 2], [[f64; 2]; 2]) {
    let (c, s) = if rotate { (t.cos(), t.sin()) } else { (1.0, 0.0) };
    let mu = [c * x[0] + s * x[1], -s * x[0] + c * x[1]];
    let m = (k * t).exp() * l;
    let mean = [m[(0, 0)] * mu[0] + m[(0, 1)] * mu[1], m[(1, 0)] * mu[0] + m[(1, 1)] * mu[1]];
    let mm = &m * m.transpose() * t;
    (mean, [[mm[(0, 0)], mm[(0, 1)]], [mm[(1, 0)], mm[(1, 1)]]])
}

fn gaussian2(mean: [f64; 2], cov: [[f64; 2]; 2], y: [f64; 2]) -> f64 {
    let det = cov[0][0] * cov[1][1] - cov[0][1] * cov[1][0];
    let (a, b) = (y[0] - mean[0], y[1] - mean[1]);
    let q = (cov[1][1] * a * a - (cov[0][1] + cov[1][0]) * a * b + cov[0][0] * b * b) / det;
    (-0.5 * q).exp() / (2.0 * std::f64::consts::PI * det.sqrt())
}

fn explicit_density(cfg: &ExperimentConfig) -> Result<Outcome> {
    let s = &cfg.explicit;
    let drift = presets::drift(&s.drift, 2, 0.0)?;
    let rotate = s.drift == "rotation-2d";
    let a = if rotate { DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]) } else { DMatrix::zeros(2, 2) };
    let l = if s.u0 == "linear" { DMatrix::from_row_slice(2, 2, &s.u0_matrix) } else { DMatrix::identity(2, 2) };
    let k = if s.reaction == "linear" { DMatrix::from_row_slice(2, 2, &s.reaction_matrix) } else { DMatrix::zeros(2, 2) };
    let u0 = if s.u0 == "linear" { Diffeomorphism::linear(l.clone())? } else { Diffeomorphism::identity(2) };
    let reaction = if s.reaction == "linear" { VectorReaction::linear(k.clone()) } else { VectorReaction::zero(2) };
    let rho = LinearCharacteristicDensity::new(&a, s.t, &s.x)?;
    let formula = |y: [f64; 2]| explicit_density_divfree(&u0, &reaction, &|v| rho.eval(v), &y, s.t);
    let (mean, cov) = explicit_gaussian_law(rotate, &l, &k, s.t, s.x);
    let sd = cov[0][0].max(cov[1][1]).sqrt();

    // samples u = Z_t(u0(Y_{0,t}(x)))
    let grid = TimeGrid::new(s.t, s.n_steps)?;
    let sampler = VectorSampler::new(grid, &HurstVector::uniform(s.hurst, 2)?, Method::default_for(s.n_steps))?;
    let opts = SolverOptions::default();
    let samples: Vec<[f64; 2]> = (0..s.n_samples as u64)
        .into_par_iter()
        .map(|i| {
            let path = sampler.sample(StreamSeed::new(cfg.seed, lane::PATH, i));
            let y = inverse_endpoint(&drift, &path, s.n_steps, &s.x, opts)?;
            let u = reaction.forward(&u0.apply(&y), s.t, 1e-12)?;
            Ok([u[0], u[1]])
        })
        .collect::<Result<_>>()?;
    let kde = Kde2d::new(&samples)?;

    let half = s.grid_sigmas * sd;
    let np = s.grid_points;
    let coord = |c: f64, i: usize| c - half + 2.0 * half * i as f64 / (np - 1) as f64;
    let points: Vec<[f64; 2]> = (0..np * np).map(|q| [coord(mean[0], q / np), coord(mean[1], q % np)]).collect();
    let rows: Vec<Vec<f64>> = points
        .par_iter()
        .map(|&y| Ok(vec![y[0], y[1], formula(y)?, gaussian2(mean, cov, y), kde.eval(y)]))
        .collect::<Result<_>>()?;
    let analytic_err = rows.iter().map(|r| (r[2] - r[3]).abs()).fold(0.0, f64::max);
    let kde_err = rows.iter().map(|r| (r[2] - r[4]).abs()).fold(0.0, f64::max);

    // mass on a box of ±8 standard deviations
    let mp = s.mass_points;
    let box_half = 8.0 * sd;
    let h = 2.0 * box_half / (mp - 1) as f64;
    let w = simpson_weights(mp, h);
    let mass_rows: Vec<f64> = (0..mp)
        .into_par_iter()
        .map(|i| {
            let y0 = mean[0] - box_half + i as f64 * h;
            (0..mp).try_fold(0.0, |acc, j| Ok(acc + w[j] * formula([y0, mean[1] - box_half + j as f64 * h])?)).map(|row: f64| w[i] * row)
        })
        .collect::<Result<_>>()?;
    let mass: f64 = mass_rows.iter().sum();

    let mut out = Outcome::default();
    out.check_le("formula_vs_analytic", analytic_err, EXPLICIT_ANALYTIC);
    out.check_le("formula_vs_kde", kde_err, EXPLICIT_KDE);
    out.check_le("mass", (mass - 1.0).abs(), EXPLICIT_MASS);
    out.result("law_mean", mean);
    out.result("law_covariance", cov);
    out.result("kde_bandwidth", kde.bandwidth());
    out.result("max_formula_vs_analytic", analytic_err);
    out.result("max_formula_vs_kde", kde_err);
    out.result("mass", mass);
    out.artifact("explicit_grid.csv", csv_table(&["y1", "y2", "formula", "analytic", "kde"], rows));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gaussian_law_matches_rotation_closed_form() {
        let id = DMatrix::identity(2, 2);
        let zero = DMatrix::zeros(2, 2);
        let (mean, cov) = explicit_gaussian_law(true, &id, &zero, 1.0, [0.7, -0.4]);
        assert!((mean[0] - (0.7 * 1f64.cos() - 0.4 * 1f64.sin())).abs() < 1e-15);
        assert!((cov[0][0] - 1.0).abs() < 1e-15 && cov[0][1].abs() < 1e-15);
        // standard normal peak
        assert!((gaussian2([0.0; 2], [[1.0, 0.0], [0.0, 1.0]], [0.0; 2]) - 1.0 / (2.0 * std::f64::consts::PI)).abs() < 1e-15);
    }

    #[test]
    fn second_moments_match_direct_sum() {
        let grid = TimeGrid::new(1.0, 8).unwrap();
        let sampler = FbmSampler::new(grid, 0.7, Method::Cholesky).unwrap();
        let m = second_moments(&sampler, 3, 300);
        let mut direct = 0.0;
        for i in 0..300 {
            let p = sampler.sample(StreamSeed::path(3, i));
            direct += p.value(8) * p.value(5);
        }
        // row 7 (node 8), column 4 (node 5) of the lower triangle
        let k = 7 * 8 / 2 + 4;
        assert!((m[k] - direct / 300.0).abs() < 1e-12);
    }
}
