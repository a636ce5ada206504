//! Comparison-function algebra.
//!
//! Class-K gains are expression trees over a small set of strictly
//! increasing primitives (linear, power, saturating exponential, monotone
//! table) closed under composition, pointwise max, and inversion. Class-KL
//! bounds are kept in the factored form μ₁(μ₂(r)·e^{−t}) wherever possible;
//! sampled grids and a registry of named closed forms cover the rest.
//!
//! Tables interpolate linearly over log-spaced knots by default; log-log
//! interpolation is available where exact power-law reproduction matters.
//! All values are immutable after construction and safe to evaluate from
//! many threads.

mod expr;
mod kl;
mod table;

pub use expr::{ComparisonFn, InvertSpec, KExpr};
pub use kl::{
    kl_cascade, kl_factorize, kl_majorize, CascadeOptions, KLFn, KlGrid, MajorizeOptions,
};
pub use table::{lin_spaced, log_spaced, Interp, MonotoneTable, TableSpec};
