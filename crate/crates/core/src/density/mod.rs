//! Monte Carlo laws of `u(t, x)`, Gaussian density envelopes, and the
//! explicit density formula for divergence-free drifts with Brownian noise.

mod envelope;
mod experiment;
mod explicit;
mod kde;

pub use envelope::{gaussian_envelope, EnvelopeParams};
pub use experiment::{
    run_density_experiment, sample_solution, verify_gf_bounds, zero_drift_density, DensityConfig, DensityReport,
    GfBoundReport, GridComparison, RegressionBin,
};
pub use explicit::{
    explicit_density_divfree, Diffeomorphism, LinearCharacteristicDensity, VectorReaction,
};
pub use kde::{bootstrap_band, silverman_bandwidth, Kde, Kde2d};
