use thiserror::Error;

/// Errors shared across the toolbox modules.
#[derive(Debug, Error)]
pub enum CoreError {
    /// A gain did not satisfy the class-K / class-K-infinity contract.
    #[error("invalid comparison function: {0}")]
    InvalidGain(String),

    /// Inversion requested outside the function's range.
    #[error("inversion requires a class-K∞ function or an explicit range cap: {0}")]
    NotInvertible(String),

    /// A sampled (r, t) grid failed a KL monotonicity or smallness condition.
    #[error("KL condition violated: {condition} at knot (r={r}, t={t}, value={value})")]
    KlConditionViolated {
        condition: String,
        r: f64,
        t: f64,
        value: f64,
    },

    /// System registration or transformation rejected the model.
    #[error("invalid system model: {0}")]
    InvalidSystem(String),

    /// The adaptive integrator stalled without crossing the blowup threshold.
    #[error("stiffness failure: step size underflow at t={t} with |x|={state_norm}")]
    Stiffness { t: f64, state_norm: f64 },

    /// A check was asked to run with an unusable sampling plan.
    #[error("invalid battery: {0}")]
    InvalidBattery(String),

    /// Grid scan or candidate evaluation failed.
    #[error("lyapunov evaluation failed: {0}")]
    LyapunovEval(String),

    /// Dense linear algebra failure (singular solve, dimension mismatch).
    #[error("linear algebra error: {0}")]
    Linear(String),

    /// Norm-estimator construction rejected the candidate.
    #[error("estimator construction failed: {0}")]
    Estimator(String),

    /// Value-function grid setup or iteration failure.
    #[error("value function error: {0}")]
    ValueFn(String),

    /// A referenced registry entry (fixture, named form) does not exist.
    #[error("unknown name {name:?} in registry {registry}")]
    UnknownName { registry: &'static str, name: String },
}
