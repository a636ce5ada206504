//! Desk-scale numerics for the min-max cost-to-reach value function.
//!
//! The state space splits into the output-dominated set D, a collar, and
//! the exterior; on the exterior the value function accumulates a Ξ-cost
//! until D is reached, taking the worst disturbance and the most helpful
//! auxiliary control near the collar. Value iteration runs on a rectangular
//! grid with multilinear interpolation and double buffering (sweeps
//! parallelize over nodes deterministically). One inf-convolution pass
//! provides the Lipschitz regularization of the result.

mod bellman;
mod geometry;
mod grid;
mod infconv;

pub use bellman::{
    check_v0_dissipation, compute_v0, DissipationBattery, GridValueFn, NodeFlag, V0Options,
};
pub use geometry::{GeometrySets, Region};
pub use grid::RectGrid;
pub use infconv::{inf_convolve, modulus_of_continuity};
