//! Numerical laboratory for the stochastic transport equation driven by
//! (fractional) Brownian motion.
//!
//! The crate is organised bottom-up:
//!
//! * [`fbm`] samples fractional Brownian paths exactly (Cholesky, circulant
//!   embedding) and through the Volterra kernel as a cross-check.
//! * [`flow`] integrates the forward characteristic flow, its inverse and the
//!   first variation as random ODEs with additive noise.
//! * [`transport`] assembles the solution by the method of characteristics and
//!   checks the weak formulation with the ε-symmetric integral.
//! * [`malliavin`] evaluates Malliavin derivative traces of the inverse flow
//!   and inner products in the canonical Hilbert space of fBm.
//! * [`density`] runs Monte Carlo density experiments against Gaussian
//!   envelopes and the explicit divergence-free density.
//! * [`bench`] is the reproducible experiment runner behind the `ftlab` CLI.

pub mod bench;
pub mod density;
pub mod error;
pub mod fbm;
pub mod flow;
pub mod io;
pub mod malliavin;
pub mod presets;
pub mod quadrature;
pub mod rng;
pub mod stats;
pub mod tolerances;
pub mod transport;

pub use error::{Error, Result};
