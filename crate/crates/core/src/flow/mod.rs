//! Characteristic flows of `dX = b(t, X) dt + dB^H`.
//!
//! Everything is solved through the random ODE `Z = X − (B_t − B_ref)`, so
//! the rough driver never enters the stepper: between grid nodes the driver is
//! linear and RK4 sees a smooth right-hand side. The inverse flow is the same
//! equation run backwards in time from the terminal point.

mod drift;
mod solver;

pub use drift::{ConsistencyReport, DriftField, FieldFn};
pub use solver::{
    flow_jacobian, forward_endpoint, forward_flow, forward_with_jacobian, inverse_endpoint, inverse_flow,
    invert_pointwise, FlowPath, InverseFlowPath, SolverOptions, VariationPath,
};
