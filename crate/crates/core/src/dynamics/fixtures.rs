use std::sync::Arc;

use super::model::{DynFn, OutFn, SystemModel};
use crate::{CoreError, Result};

/// Smooth bump with support (−eps, eps), equal to 1 at 0:
/// exp(−s²/(ε²−s²)).
pub fn bump(s: f64, eps: f64) -> f64 {
    if s.abs() >= eps {
        0.0
    } else {
        (-(s * s) / (eps * eps - s * s)).exp()
    }
}

/// C-infinity step: 0 for s ≤ 0, 1 for s ≥ 1.
pub fn smooth_step(s: f64) -> f64 {
    fn g(t: f64) -> f64 {
        if t <= 0.0 {
            0.0
        } else {
            (-1.0 / t).exp()
        }
    }
    let a = g(s);
    let b = g(1.0 - s);
    a / (a + b)
}

/// Cubic-growth scalar system with two unstable equilibria at ±1 and a
/// stable origin; the output window closes beyond |x| = 2 so escapes are
/// invisible in the output. Bump radius 0.2.
fn cubic_escape() -> SystemModel {
    const EPS: f64 = 0.2;
    let f: DynFn = Arc::new(|x, _u, _w, dx| {
        let x = x[0];
        dx[0] = if x <= -1.0 {
            x.powi(3) * (1.0 - bump(x + 1.0, EPS))
        } else if x >= 1.0 {
            x.powi(3) * (1.0 - bump(x - 1.0, EPS))
        } else {
            -x * (1.0 - bump(x + 1.0, EPS)) * (1.0 - bump(x - 1.0, EPS))
        };
    });
    let h: OutFn = Arc::new(|x, y| {
        let r = x[0].abs();
        // identity on [−2, 2], smoothly zero beyond |x| = 3
        y[0] = x[0] * smooth_step(3.0 - r);
    });
    SystemModel::new("remark-3-10", (1, 0, 0, 1), f, h).expect("fixture registers")
}

/// Exponential-growth scalar system (growth rate bounded by |x|) whose
/// output saturates at 1 away from a small neighbourhood of the origin:
/// integrally OSS but not OSS. Growth bump radius 0.1; output bump radius
/// 0.3·(1 − 0.1)·e^{−1}.
fn exp_growth_sigma1() -> SystemModel {
    const EPS_F: f64 = 0.1;
    let eps_h: f64 = 0.3 * (1.0 - EPS_F) * (-1.0f64).exp();
    let f: DynFn = Arc::new(|x, _u, _w, dx| {
        let x = x[0];
        dx[0] = if x <= -1.0 {
            x * (1.0 - bump(x + 1.0, EPS_F))
        } else if x >= 1.0 {
            x * (1.0 - bump(x - 1.0, EPS_F))
        } else {
            -x * (1.0 - bump(x + 1.0, EPS_F)) * (1.0 - bump(x - 1.0, EPS_F))
        };
    });
    let h: OutFn = Arc::new(move |x, y| {
        y[0] = 1.0 - bump(x[0], eps_h);
    });
    SystemModel::new("example-6-3-sigma1", (1, 0, 0, 1), f, h).expect("fixture registers")
}

/// Pure drift ẋ = x with constant output 1. The output does not vanish at
/// the origin, so this model skips the registration checks; it exists as
/// the comparison companion of `example-6-3-sigma1`.
fn exp_growth_sigma2() -> SystemModel {
    let f: DynFn = Arc::new(|x, _u, _w, dx| dx[0] = x[0]);
    let h: OutFn = Arc::new(|_x, y| y[0] = 1.0);
    SystemModel::new_unchecked("example-6-3-sigma2", (1, 0, 0, 1), f, h)
}

/// Double integrator with position output: A = [[0,1],[0,0]], B = [0,1]ᵀ,
/// C = [1,0]. Observable, hence detectable.
fn double_integrator() -> SystemModel {
    let f: DynFn = Arc::new(|x, u, _w, dx| {
        dx[0] = x[1];
        dx[1] = u[0];
    });
    let h: OutFn = Arc::new(|x, y| y[0] = x[0]);
    SystemModel::new("linear-double-integrator", (2, 1, 0, 1), f, h).expect("fixture registers")
}

fn scalar_decay() -> SystemModel {
    let f: DynFn = Arc::new(|x, _u, _w, dx| dx[0] = -x[0]);
    let h: OutFn = Arc::new(|x, y| y[0] = x[0]);
    SystemModel::new("scalar-decay", (1, 0, 0, 1), f, h).expect("fixture registers")
}

fn scalar_decay_unobserved() -> SystemModel {
    let f: DynFn = Arc::new(|x, _u, _w, dx| dx[0] = -x[0]);
    let h: OutFn = Arc::new(|_x, y| y[0] = 0.0);
    SystemModel::new("scalar-decay-unobserved", (1, 0, 0, 1), f, h).expect("fixture registers")
}

fn scalar_decay_driven() -> SystemModel {
    let f: DynFn = Arc::new(|x, u, _w, dx| dx[0] = -x[0] + u[0]);
    let h: OutFn = Arc::new(|x, y| y[0] = x[0]);
    SystemModel::new("scalar-decay-driven", (1, 1, 0, 1), f, h).expect("fixture registers")
}

pub const FIXTURE_NAMES: [&str; 7] = [
    "linear-double-integrator",
    "remark-3-10",
    "example-6-3-sigma1",
    "example-6-3-sigma2",
    "scalar-decay",
    "scalar-decay-unobserved",
    "scalar-decay-driven",
];

/// Look up a registered fixture system by name.
pub fn fixture(name: &str) -> Result<SystemModel> {
    match name {
        "linear-double-integrator" => Ok(double_integrator()),
        "remark-3-10" => Ok(cubic_escape()),
        "example-6-3-sigma1" => Ok(exp_growth_sigma1()),
        "example-6-3-sigma2" => Ok(exp_growth_sigma2()),
        "scalar-decay" => Ok(scalar_decay()),
        "scalar-decay-unobserved" => Ok(scalar_decay_unobserved()),
        "scalar-decay-driven" => Ok(scalar_decay_driven()),
        other => Err(CoreError::UnknownName {
            registry: "fixtures",
            name: other.into(),
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bump_support_and_peak() {
        assert_eq!(bump(0.25, 0.2), 0.0);
        assert_eq!(bump(0.0, 0.2), 1.0);
        assert!(bump(0.1, 0.2) > 0.0 && bump(0.1, 0.2) < 1.0);
    }

    #[test]
    fn cubic_escape_is_pure_cubic_beyond_bump() {
        let sys = fixture("remark-3-10").unwrap();
        let dx = sys.eval_f(&[2.0], &[], &[]);
        assert_eq!(dx[0], 8.0);
        let dx = sys.eval_f(&[-1.5], &[], &[]);
        assert_eq!(dx[0], -3.375);
        // equilibria at 0 and ±1
        assert_eq!(sys.eval_f(&[0.0], &[], &[])[0], 0.0);
        assert_eq!(sys.eval_f(&[1.0], &[], &[])[0], 0.0);
    }

    #[test]
    fn cubic_escape_output_window() {
        let sys = fixture("remark-3-10").unwrap();
        assert_eq!(sys.output(&[1.5])[0], 1.5);
        assert_eq!(sys.output(&[-2.0])[0], -2.0);
        assert_eq!(sys.output(&[3.5])[0], 0.0);
        let mid = sys.output(&[2.5])[0];
        assert!(mid > 0.0 && mid < 2.5);
    }

    #[test]
    fn sigma1_saturating_output() {
        let sys = fixture("example-6-3-sigma1").unwrap();
        assert_eq!(sys.output(&[0.0])[0], 0.0);
        assert_eq!(sys.output(&[0.5])[0], 1.0);
        assert_eq!(sys.output(&[100.0])[0], 1.0);
        // drift is linear beyond the bump
        assert_eq!(sys.eval_f(&[2.0], &[], &[])[0], 2.0);
        // and decays inside the unit interval
        assert!(sys.eval_f(&[0.5], &[], &[])[0] < 0.0);
    }

    #[test]
    fn unknown_fixture_is_an_error() {
        assert!(matches!(
            fixture("nope"),
            Err(CoreError::UnknownName { .. })
        ));
    }
}
