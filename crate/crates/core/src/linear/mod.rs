//! Exact detectability analysis and quadratic certificate synthesis for
//! linear time-invariant systems.
//!
//! Hurwitz testing goes through the Lyapunov equation (solvability plus
//! positive definiteness) instead of an eigensolver; the vectorized system
//! is eliminated over the n(n+1)/2 symmetric unknowns with partial
//! pivoting. Dense analysis is capped at n ≤ 32.

mod certificate;
mod detect;
mod lyap;
mod mat;

pub use certificate::{synthesize_certificate, LinearSystem, QuadraticCertificate};
pub use detect::{detectability_check, Detectability};
pub use lyap::{is_hurwitz, lyap_residual, lyap_solve, HurwitzReport};
pub use mat::{cholesky, expm, gauss_solve, spectral_norm, Mat};
