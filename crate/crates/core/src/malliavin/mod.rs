//! Malliavin derivatives of the inverse flow and the canonical Hilbert space
//! of fractional Brownian motion.
//!
//! In one dimension the derivative of the inverse flow is explicit,
//! `D_α Y_{s,t}(x) = −1_{[s,t]}(α) exp(−∫_s^α b′(r, Y_{r,t}(x)) dr)`, so a trace is
//! one cumulative quadrature along a stored backward trajectory.

mod inner;
mod trace;

pub use inner::{
    cross_inner_product, cross_inner_product_u, h_inner_product, InnerProductResult, StepFunction,
};
pub use trace::{derivative_bound_constants, derivative_u, derivative_y, MalliavinTrace};
