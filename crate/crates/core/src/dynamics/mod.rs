//! System models, trajectory integration, and model transforms.
//!
//! Trajectories are produced by an adaptive Dormand-Prince 5(4) stepper that
//! restarts at input switch times, detects finite escape against a norm
//! threshold, and records a local error estimate per accepted step. The
//! fixture registry holds the built-in benchmark systems.
//!
//! Evaluators must be pure and re-entrant; batch simulations parallelize
//! over initial conditions without shared mutable state.

mod fixtures;
mod integrate;
mod model;
mod transform;

pub use fixtures::{bump, fixture, smooth_step, FIXTURE_NAMES};
pub use integrate::{
    simulate, simulate_until, trapezoid_along, trapezoid_prefix, InputRecord, SimOptions, StopSet,
    Termination, Trajectory,
};
pub use model::{
    default_disturbance_samples, disturbance_vertices, norm, DynFn, OutFn, Signal, SystemModel,
};
pub use transform::{close_robust_loop, default_kappa, slow_system, KappaFn};
