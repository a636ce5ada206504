use rayon::prelude::*;

use super::candidate::{GridSpec, LyapCandidate};
use crate::checks::{BatteryStats, CheckReport, FalsifyTol, Verdict, Witness};
use crate::dynamics::{norm, Signal, SystemModel};
use crate::Result;

/// Pointwise dissipation check over a state × control × disturbance grid:
/// ∇V·f(x, u, w) ≤ −decay(x) + σ₁(|u|) + σ₂(|h(x)|), with the decay term
/// either −α(|x|) or −V(x) depending on the candidate's form.
pub fn verify_dissipation(
    sys: &SystemModel,
    cand: &LyapCandidate,
    grid: &GridSpec,
) -> Result<CheckReport> {
    verify_dissipation_tol(sys, cand, grid, FalsifyTol::default())
}

pub fn verify_dissipation_tol(
    sys: &SystemModel,
    cand: &LyapCandidate,
    grid: &GridSpec,
    tol: FalsifyTol,
) -> Result<CheckReport> {
    let states = grid.states();
    let controls = grid.controls(sys.m_u);
    cand.validate(states.iter().take(512).cloned())?;

    struct PointResult {
        margin: f64,
        x: Vec<f64>,
        u: Vec<f64>,
        w: Vec<f64>,
        lhs: f64,
        rhs: f64,
    }

    let results: Vec<PointResult> = states
        .par_iter()
        .map(|x| {
            let gv = cand.grad(x);
            let hnorm = sys.output_norm(x);
            let decay = cand.decay_at(x);
            let mut worst = PointResult {
                margin: f64::INFINITY,
                x: x.clone(),
                u: vec![],
                w: vec![],
                lhs: 0.0,
                rhs: 0.0,
            };
            for u in &controls {
                let su = cand.sigma1_at(norm(u));
                for w in &sys.disturbance_samples {
                    let f = sys.eval_f(x, u, w);
                    let lhs: f64 = gv.iter().zip(&f).map(|(a, b)| a * b).sum();
                    let rhs = -decay + su + cand.sigma2_at(hnorm);
                    if rhs - lhs < worst.margin {
                        worst.margin = rhs - lhs;
                        worst.u = u.clone();
                        worst.w = w.clone();
                        worst.lhs = lhs;
                        worst.rhs = rhs;
                    }
                }
            }
            worst
        })
        .collect();

    let mut stats = BatteryStats {
        trajectories: 0,
        time_points: states.len() * controls.len() * sys.disturbance_samples.len(),
        skipped: 0,
        notes: vec![format!(
            "dissipation grid: {} states x {} controls x {} disturbances",
            states.len(),
            controls.len(),
            sys.disturbance_samples.len()
        )],
    };
    let mut worst_margin = f64::INFINITY;
    let mut witness = None;
    let mut worst_excess = f64::NEG_INFINITY;
    for r in results {
        worst_margin = worst_margin.min(r.margin);
        if tol.violated(r.lhs, r.rhs) {
            let excess = (r.lhs - r.rhs) / r.lhs.abs().max(r.rhs.abs()).max(1.0);
            if excess > worst_excess {
                worst_excess = excess;
                witness = Some(Witness {
                    x0: r.x,
                    u: Signal::constant(r.u),
                    w: Signal::constant(r.w),
                    horizon: 0.0,
                    t: 0.0,
                    lhs: r.lhs,
                    rhs: r.rhs,
                    x0_second: None,
                    u_second: None,
                });
            }
        }
    }
    if witness.is_some() {
        stats
            .notes
            .push("witness is a grid point, not a trajectory".into());
    }
    Ok(CheckReport {
        verdict: if witness.is_some() {
            Verdict::Falsified
        } else {
            Verdict::HoldsOnSamples
        },
        witness,
        worst_margin,
        battery: stats,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::comparison::ComparisonFn;
    use crate::dynamics::fixture;
    use crate::lyapunov::candidate::DecayTerm;

    fn half_square_candidate() -> LyapCandidate {
        // ẋ = −x + u, V = x²/2: ∇V·f = −x² + xu ≤ −x²/2 + u²/2
        LyapCandidate::quadratic(
            "half-square",
            vec![vec![0.5]],
            ComparisonFn::power(0.5, 2.0),
            ComparisonFn::power(0.5, 2.0),
            DecayTerm::StateGain(ComparisonFn::power(0.5, 2.0)),
            Some(ComparisonFn::power(0.5, 2.0)),
            None,
        )
    }

    #[test]
    fn completing_the_square_has_zero_worst_margin() {
        let sys = fixture("scalar-decay-driven").unwrap();
        let grid = GridSpec::centered(4.0, 1, 81).with_controls(4.0, 81);
        let report = verify_dissipation(&sys, &half_square_candidate(), &grid).unwrap();
        assert_eq!(report.verdict, Verdict::HoldsOnSamples);
        // zero margin is attained exactly on the x = u diagonal of the grid
        assert!(report.worst_margin.abs() < 1e-9, "{}", report.worst_margin);
    }

    #[test]
    fn inflated_decay_is_falsified_near_balance_locus() {
        let sys = fixture("scalar-decay-driven").unwrap();
        let mut cand = half_square_candidate();
        cand.decay = DecayTerm::StateGain(ComparisonFn::power(5.0, 2.0));
        let grid = GridSpec::centered(4.0, 1, 81).with_controls(4.0, 81);
        let report = verify_dissipation(&sys, &cand, &grid).unwrap();
        assert_eq!(report.verdict, Verdict::Falsified);
        let w = report.witness.unwrap();
        assert!(w.x0[0].abs() > 0.5, "witness near origin: {:?}", w.x0);
    }
}
