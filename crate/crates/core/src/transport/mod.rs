//! Solutions of the transport equation assembled from characteristics, and a
//! numerical check of the weak formulation.

mod datum;
mod solution;
mod symmetric;
mod weak;

pub use datum::{InitialDatum, ReactionField, TestFunction};
pub use solution::{evaluate_solution, solve_z, SolutionSample, ZOptions};
pub use symmetric::{symmetric_integral, symmetric_integral_at, SymmetricIntegral};
pub use weak::{weak_form_residual, WeakFormParams, WeakFormReport, WeakTerms};
