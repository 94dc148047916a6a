//! Every threshold that decides a pass/fail outcome lives here so runs can
//! echo them into their manifests.

use std::collections::BTreeMap;

/// ‖L·Lᵀ − G‖_max relative to ‖G‖_max for the Cholesky factor.
pub const CHOLESKY_RECONSTRUCTION: f64 = 1e-10;
/// Monte Carlo agreement, in standard errors.
pub const MC_SIGMAS: f64 = 3.0;
/// Circulant embedding: eigenvalues below `-this * max eigenvalue` are fatal.
pub const CIRCULANT_NEGATIVE_EIGEN: f64 = 1e-12;
/// Closed-form identities hold to this many units of roundoff, relative to
/// the magnitude of the summands.
pub const FORMULA_ROUNDOFF: f64 = 64.0 * f64::EPSILON;
/// Finite-difference self-consistency of b′.
pub const DRIFT_FD_STEP: f64 = 1e-5;
pub const DRIFT_FD_RTOL: f64 = 1e-6;
/// Default relative local error budget of the flow integrator.
pub const FLOW_RTOL: f64 = 1e-8;
/// sup |X_{0,t}(Y_{0,t}(x)) − x| for the round-trip benchmark.
pub const ROUNDTRIP: f64 = 1e-4;
/// |X_{0,t}(x) − y| < this · (1 + |y|) after pointwise inversion.
pub const INVERT_POINTWISE: f64 = 1e-8;
/// Relative accuracy of indicator inner products against R_H(s, t).
pub const INDICATOR_REL: f64 = 1e-4;
/// Zero-drift cross inner product against t^{2H}.
pub const CROSS_ZERO_DRIFT: f64 = 1e-6;
/// KDE must integrate to one within this on its grid.
pub const KDE_NORMALIZATION: f64 = 1e-3;
/// Sup distance between the KDE and N(0,1) in the zero-drift experiment.
pub const KDE_SUP_NORMAL: f64 = 1e-2;
/// Envelope collapse against the exact Gaussian density (relative).
pub const ENVELOPE_COLLAPSE_REL: f64 = 2e-2;
/// Bootstrap confidence level of the KDE band.
pub const BOOTSTRAP_LEVEL: f64 = 0.99;
/// Explicit divergence-free density against the analytic Gaussian.
pub const EXPLICIT_ANALYTIC: f64 = 1e-8;
/// Explicit density against the 2-d KDE of inverse-flow samples (sup norm).
pub const EXPLICIT_KDE: f64 = 2e-2;
/// Mass of the explicit density on a truncated grid.
pub const EXPLICIT_MASS: f64 = 1e-2;
/// Weak-form residual relative to the largest term.
pub const WEAK_RESIDUAL_REL: f64 = 1e-2;
/// Stratonovich identity through the extrapolated symmetric integral.
pub const STRATONOVICH: f64 = 1e-3;
/// Below this many samples density experiments emit a warning.
pub const MIN_DENSITY_SAMPLES: usize = 1000;

/// All tolerances keyed by name, for manifests.
pub fn catalog() -> BTreeMap<&'static str, f64> {
    BTreeMap::from([
        ("cholesky_reconstruction", CHOLESKY_RECONSTRUCTION),
        ("mc_sigmas", MC_SIGMAS),
        ("circulant_negative_eigen", CIRCULANT_NEGATIVE_EIGEN),
        ("formula_roundoff", FORMULA_ROUNDOFF),
        ("drift_fd_step", DRIFT_FD_STEP),
        ("drift_fd_rtol", DRIFT_FD_RTOL),
        ("flow_rtol", FLOW_RTOL),
        ("roundtrip", ROUNDTRIP),
        ("invert_pointwise", INVERT_POINTWISE),
        ("indicator_rel", INDICATOR_REL),
        ("cross_zero_drift", CROSS_ZERO_DRIFT),
        ("kde_normalization", KDE_NORMALIZATION),
        ("kde_sup_normal", KDE_SUP_NORMAL),
        ("envelope_collapse_rel", ENVELOPE_COLLAPSE_REL),
        ("bootstrap_level", BOOTSTRAP_LEVEL),
        ("explicit_analytic", EXPLICIT_ANALYTIC),
        ("explicit_kde", EXPLICIT_KDE),
        ("explicit_mass", EXPLICIT_MASS),
        ("weak_residual_rel", WEAK_RESIDUAL_REL),
        ("stratonovich", STRATONOVICH),
    ])
}
