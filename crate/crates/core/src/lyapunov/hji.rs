use std::sync::Arc;

use rayon::prelude::*;

use super::candidate::{GridSpec, LyapCandidate};
use crate::checks::{BatteryStats, CheckReport, FalsifyTol, Verdict, Witness};
use crate::comparison::ComparisonFn;
use crate::dynamics::{norm, Signal};
use crate::Result;

pub type FieldFn = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;

/// Control-affine system ẋ = g₀(x) + Σ uᵢ·gᵢ(x) with output y = h(x).
#[derive(Clone)]
pub struct AffineControlSystem {
    pub n: usize,
    pub p: usize,
    drift: FieldFn,
    columns: Vec<FieldFn>,
    output: FieldFn,
}

impl AffineControlSystem {
    pub fn new(n: usize, p: usize, drift: FieldFn, columns: Vec<FieldFn>, output: FieldFn) -> Self {
        Self {
            n,
            p,
            drift,
            columns,
            output,
        }
    }

    pub fn m(&self) -> usize {
        self.columns.len()
    }

    pub fn drift_at(&self, x: &[f64]) -> Vec<f64> {
        (self.drift)(x)
    }

    pub fn column_at(&self, i: usize, x: &[f64]) -> Vec<f64> {
        (self.columns[i])(x)
    }

    pub fn output_at(&self, x: &[f64]) -> Vec<f64> {
        (self.output)(x)
    }

    pub fn f(&self, x: &[f64], u: &[f64]) -> Vec<f64> {
        let mut dx = self.drift_at(x);
        for (i, &ui) in u.iter().enumerate() {
            for (d, g) in dx.iter_mut().zip(self.column_at(i, x)) {
                *d += ui * g;
            }
        }
        dx
    }
}

/// Evaluate the Hamilton-Jacobi display
///
/// ∇V·g₀(x) + ¼·Σᵢ(∇V·gᵢ(x))² + σ₁(|x|) − σ₂(|h(x)|) ≤ 0
///
/// on a state grid. σ₁ is the state margin and σ₂ the output gain; the
/// closed form is the quadratic-cost inner maximum over u attained at
/// uᵢ = ½·∇V·gᵢ(x).
pub fn hji_check(
    sys: &AffineControlSystem,
    cand: &LyapCandidate,
    sigma1: &ComparisonFn,
    sigma2: Option<&ComparisonFn>,
    grid: &GridSpec,
) -> Result<CheckReport> {
    let tol = FalsifyTol::default();
    let states = grid.states();
    struct Point {
        margin: f64,
        x: Vec<f64>,
        display: f64,
    }
    let results: Vec<Point> = states
        .par_iter()
        .map(|x| {
            let display = hji_display(sys, cand, sigma1, sigma2, x);
            Point {
                margin: -display,
                x: x.clone(),
                display,
            }
        })
        .collect();
    let mut worst_margin = f64::INFINITY;
    let mut witness = None;
    let mut worst_excess = f64::NEG_INFINITY;
    for r in &results {
        worst_margin = worst_margin.min(r.margin);
        if tol.violated(r.display, 0.0) {
            let excess = r.display / r.display.abs().max(1.0);
            if excess > worst_excess {
                worst_excess = excess;
                witness = Some(Witness {
                    x0: r.x.clone(),
                    u: Signal::zero(sys.m()),
                    w: Signal::zero(0),
                    horizon: 0.0,
                    t: 0.0,
                    lhs: r.display,
                    rhs: 0.0,
                    x0_second: None,
                    u_second: None,
                });
            }
        }
    }
    Ok(CheckReport {
        verdict: if witness.is_some() {
            Verdict::Falsified
        } else {
            Verdict::HoldsOnSamples
        },
        witness,
        worst_margin,
        battery: BatteryStats {
            trajectories: 0,
            time_points: results.len(),
            skipped: 0,
            notes: vec![format!("HJI display evaluated at {} states", results.len())],
        },
    })
}

/// The displayed quantity itself.
pub fn hji_display(
    sys: &AffineControlSystem,
    cand: &LyapCandidate,
    sigma1: &ComparisonFn,
    sigma2: Option<&ComparisonFn>,
    x: &[f64],
) -> f64 {
    let gv = cand.grad(x);
    let drift: f64 = gv.iter().zip(sys.drift_at(x)).map(|(a, b)| a * b).sum();
    let mut quad = 0.0;
    for i in 0..sys.m() {
        let d: f64 = gv.iter().zip(sys.column_at(i, x)).map(|(a, b)| a * b).sum();
        quad += d * d;
    }
    let out = norm(&sys.output_at(x));
    drift + 0.25 * quad + sigma1.eval(norm(x)) - sigma2.map_or(0.0, |s| s.eval(out))
}

/// Worst gap between the closed-form inner maximum ∇V·g₀ + ¼Σ(∇V·gᵢ)² and
/// a brute-force maximization of ∇V·f(x, u) − |u|² over a uniform u-grid.
pub fn hji_brute_force_gap(
    sys: &AffineControlSystem,
    cand: &LyapCandidate,
    states: &[Vec<f64>],
    u_range: f64,
    u_points: usize,
) -> f64 {
    assert_eq!(sys.m(), 1, "brute-force cross-check is wired for m = 1");
    let mut worst = 0.0f64;
    for x in states {
        let gv = cand.grad(x);
        let drift: f64 = gv.iter().zip(sys.drift_at(x)).map(|(a, b)| a * b).sum();
        let d: f64 = gv.iter().zip(sys.column_at(0, x)).map(|(a, b)| a * b).sum();
        let closed = drift + 0.25 * d * d;
        let mut brute = f64::NEG_INFINITY;
        for k in 0..u_points {
            let u = -u_range + 2.0 * u_range * k as f64 / (u_points - 1) as f64;
            let fx = sys.f(x, &[u]);
            let val: f64 = gv.iter().zip(&fx).map(|(a, b)| a * b).sum::<f64>() - u * u;
            brute = brute.max(val);
        }
        worst = worst.max((closed - brute).abs());
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lyapunov::candidate::DecayTerm;

    fn scalar_affine() -> AffineControlSystem {
        // ẋ = −x + u, h = x
        AffineControlSystem::new(
            1,
            1,
            Arc::new(|x: &[f64]| vec![-x[0]]),
            vec![Arc::new(|_x: &[f64]| vec![1.0])],
            Arc::new(|x: &[f64]| vec![x[0]]),
        )
    }

    fn square_candidate() -> LyapCandidate {
        LyapCandidate::quadratic(
            "square",
            vec![vec![1.0]],
            ComparisonFn::power(1.0, 2.0),
            ComparisonFn::power(1.0, 2.0),
            DecayTerm::Value,
            None,
            None,
        )
    }

    #[test]
    fn scalar_display_signs() {
        // V = x²: display = −2x² + x² + σ₁(|x|) − σ₂(|x|).
        let sys = scalar_affine();
        let cand = square_candidate();
        let grid = GridSpec::centered(5.0, 1, 201);
        // σ₁(r) = r²/2, σ₂ = 0: display = −x²/2 ≤ 0
        let ok = hji_check(&sys, &cand, &ComparisonFn::power(0.5, 2.0), None, &grid).unwrap();
        assert_eq!(ok.verdict, Verdict::HoldsOnSamples);
        // σ₁(r) = 2r²: display = x² > 0 away from the origin
        let bad = hji_check(&sys, &cand, &ComparisonFn::power(2.0, 2.0), None, &grid).unwrap();
        assert_eq!(bad.verdict, Verdict::Falsified);
    }

    #[test]
    fn closed_form_matches_brute_force() {
        let sys = scalar_affine();
        let cand = square_candidate();
        let states: Vec<Vec<f64>> = (0..201)
            .map(|i| vec![-5.0 + 10.0 * i as f64 / 200.0])
            .collect();
        let gap = hji_brute_force_gap(&sys, &cand, &states, 6.0, 10_000);
        assert!(gap <= 1e-3, "gap {gap}");
    }
}
