//! Lyapunov-candidate verification and certificate transformations.
//!
//! Candidates pair a value map with sandwich bounds and dissipation gains;
//! verification is a pointwise grid scan of the dissipation inequality.
//! Transformations rebuild missing gains from restricted inequalities,
//! rescale verified candidates into exponential-decay form, and evaluate
//! the Hamilton-Jacobi display for control-affine systems.

mod candidate;
mod hji;
mod reconstruct;
mod rescale;
mod verify;

pub use candidate::{DecayTerm, GradFn, Gradient, GridSpec, LyapCandidate, ScalarFn};
pub use hji::{hji_brute_force_gap, hji_check, hji_display, AffineControlSystem, FieldFn};
pub use reconstruct::{remark23_reconstruct, ReconstructFlags, ReconstructOptions};
pub use rescale::{exp_decay_rescale, rescale_profile, RescaleOptions};
pub use verify::{verify_dissipation, verify_dissipation_tol};

#[cfg(test)]
mod tests {
    use super::*;
    use crate::comparison::ComparisonFn;
    use crate::dynamics::{fixture, simulate, trapezoid_along, Signal, SimOptions};

    fn half_square() -> LyapCandidate {
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
    fn integrated_dissipation_holds_along_trajectories() {
        // V(x(t)) − V(x(0)) ≤ ∫ (−α(|x|) + σ₁(|u|) + σ₂(|y|)) dt
        let sys = fixture("scalar-decay-driven").unwrap();
        let cand = half_square();
        let u = Signal::piecewise(
            vec![0.0, 1.0, 2.5],
            vec![vec![0.7], vec![-0.4], vec![0.2]],
        )
        .unwrap();
        for x0 in [0.3, -1.5, 2.0] {
            let traj = simulate(
                &sys,
                &[x0],
                &u,
                &Signal::zero(0),
                5.0,
                &SimOptions::default(),
            )
            .unwrap();
            let rhs = trapezoid_along(&traj, |k| {
                let x = &traj.states[k];
                let un = crate::dynamics::norm(u.eval(traj.times[k]));
                -cand.decay_at(x) + cand.sigma1_at(un)
            });
            let lhs = cand.value(traj.final_state()) - cand.value(&[x0]);
            assert!(lhs <= rhs + 1e-6, "x0={x0}: {lhs} > {rhs}");
        }
    }

    #[test]
    fn verified_candidate_supplies_iiuoss_gains() {
        // χ = α₃, κ = α₂ turns the dissipation certificate into the
        // finite-energy estimate.
        let sys = fixture("scalar-decay").unwrap();
        let cand = LyapCandidate::quadratic(
            "half-square-free",
            vec![vec![0.5]],
            ComparisonFn::power(0.5, 2.0),
            ComparisonFn::power(0.5, 2.0),
            DecayTerm::StateGain(ComparisonFn::power(1.0, 2.0)),
            None,
            None,
        );
        // ∇V·f = −x² = −α₃(|x|) exactly
        let grid = GridSpec::centered(4.0, 1, 101);
        assert!(crate::lyapunov::verify_dissipation(&sys, &cand, &grid)
            .unwrap()
            .holds());
        let DecayTerm::StateGain(alpha3) = &cand.decay else {
            unreachable!()
        };
        let report = crate::checks::check_iiuoss(
            &sys,
            alpha3,
            &cand.alpha2,
            &ComparisonFn::identity(),
            &crate::checks::Battery {
                trajectories: 24,
                horizon: 6.0,
                ..Default::default()
            },
        )
        .unwrap();
        assert!(report.holds(), "{report:?}");
    }

    #[test]
    fn rescaled_candidate_passes_exponential_verification() {
        let sys = fixture("scalar-decay-driven").unwrap();
        let cand = half_square();
        let rescaled = exp_decay_rescale(&cand, &RescaleOptions::default()).unwrap();
        let grid = GridSpec::centered(3.0, 1, 101).with_controls(2.0, 41);
        let report = verify_dissipation(&sys, &rescaled, &grid).unwrap();
        assert!(report.holds(), "{report:?}");
        assert!(report.worst_margin >= -1e-6, "{}", report.worst_margin);
    }

    #[test]
    fn rescaled_decay_holds_along_simulated_runs() {
        // Ẇ ≤ −W + σ̂₁(|u|) integrated over random driven runs.
        let sys = fixture("scalar-decay-driven").unwrap();
        let rescaled = exp_decay_rescale(&half_square(), &RescaleOptions::default()).unwrap();
        let sigma1 = rescaled.sigma1.clone().unwrap();
        for (seed, x0) in [(1u64, 0.5), (2, -1.2), (3, 2.0)] {
            let u = Signal::piecewise(
                vec![0.0, 0.8 + seed as f64 * 0.3],
                vec![vec![0.6], vec![-0.8]],
            )
            .unwrap();
            let traj = simulate(
                &sys,
                &[x0],
                &u,
                &Signal::zero(0),
                4.0,
                &SimOptions::default(),
            )
            .unwrap();
            let rhs = trapezoid_along(&traj, |k| {
                let w = rescaled.value(&traj.states[k]);
                let un = crate::dynamics::norm(u.eval(traj.times[k]));
                -w + sigma1.eval(un)
            });
            let lhs = rescaled.value(traj.final_state()) - rescaled.value(&[x0]);
            assert!(lhs <= rhs + 1e-5, "x0={x0}: {lhs} > {rhs}");
        }
    }
}
