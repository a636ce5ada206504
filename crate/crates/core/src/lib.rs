//! Numerical toolbox for nonlinear detectability analysis.
//!
//! The crate turns the classical comparison-function formulation of
//! input-output-to-state stability into executable numerics:
//!
//! - [`comparison`]: class-K / class-KL gain algebra (composition, inversion,
//!   factorization, cascade transforms) over closed forms and monotone tables;
//! - [`dynamics`]: system models, adaptive trajectory integration with
//!   finite-escape detection, robustness loops, time-slowing transforms, and
//!   the built-in fixture systems;
//! - [`checks`]: empirical verification / falsification of trajectory-level
//!   stability estimates over seeded sample batteries;
//! - [`lyapunov`]: dissipation-inequality verification and certificate
//!   transformations (gain reconstruction, exponential-decay rescaling,
//!   Hamilton-Jacobi checks);
//! - [`linear`]: exact detectability analysis and quadratic certificate
//!   synthesis for LTI systems;
//! - [`observer`]: norm-estimator construction and coupled plant/estimator
//!   runs;
//! - [`valuefn`]: grid dynamic programming for the min-max cost-to-reach
//!   value function, plus inf-convolution smoothing.
//!
//! Verdicts produced by the checkers are deliberately asymmetric: a property
//! can be *falsified* by a concrete witness, but can only ever *hold on the
//! samples tested*.

pub mod comparison;
pub mod dynamics;
pub mod checks;
pub mod linear;
pub mod lyapunov;
pub mod observer;
pub mod valuefn;

mod error;

pub use error::CoreError;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, CoreError>;
