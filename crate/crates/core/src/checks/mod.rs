//! Empirical verification and falsification of trajectory-level stability
//! estimates.
//!
//! A check simulates a seeded battery of initial conditions and inputs and
//! tests the chosen inequality at every trajectory knot. Verdicts are
//! `HoldsOnSamples` or `Falsified` with a replayable witness; a check never
//! proves a property, since the definitions quantify over all measurable
//! inputs. Battery items run in parallel and reduce deterministically.

mod battery;
mod engine;
mod margins;
mod report;
mod spec;

pub use battery::{Battery, BatteryItem};
pub use engine::{check_estimate, check_iiuoss, check_incremental, replay_witness};
pub use margins::{gasmo_margin_from_uoss, stability_margin};
pub use report::{BatteryStats, CheckReport, FalsifyTol, Verdict, Witness};
pub use spec::EstimateSpec;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::comparison::{ComparisonFn, KLFn, TableSpec};
    use crate::dynamics::fixture;

    fn small_battery(seed: u64) -> Battery {
        Battery {
            seed,
            trajectories: 24,
            horizon: 8.0,
            ..Battery::default()
        }
    }

    #[test]
    fn uoss_holds_on_pure_decay() {
        // ẋ = −x, h = x: |x(t)| = |ξ|e^{−t} meets β exactly.
        let sys = fixture("scalar-decay").unwrap();
        let spec = EstimateSpec::Uoss {
            beta: KLFn::exp_decay(1.0),
            gamma2: ComparisonFn::identity(),
        };
        let report = check_estimate(&sys, &spec, &small_battery(7)).unwrap();
        assert_eq!(report.verdict, Verdict::HoldsOnSamples);
        assert!(report.worst_margin >= -1e-9, "{}", report.worst_margin);
    }

    #[test]
    fn oss_falsified_on_hidden_exponential_growth() {
        // Unobserved exponential growth: no (β, γ₂) pair up to scale 1e3
        // can bound it, and the witness must replay at tighter tolerance.
        let sys = fixture("example-6-3-sigma1").unwrap();
        let spec = EstimateSpec::Uoss {
            beta: KLFn::exp_decay(1000.0),
            gamma2: ComparisonFn::linear(1000.0),
        };
        let battery = Battery {
            trajectories: 32,
            horizon: 25.0,
            shells: crate::comparison::log_spaced(5, 0.25, 4.0),
            ..Battery::default()
        };
        let report = check_estimate(&sys, &spec, &battery).unwrap();
        assert_eq!(report.verdict, Verdict::Falsified);
        let witness = report.witness.expect("witness recorded");
        assert!(crate::dynamics::norm(&witness.x0) > 1.0);
        let replay = replay_witness(&sys, &spec, &witness, 10.0, &battery).unwrap();
        assert_eq!(replay.verdict, Verdict::Falsified);
    }

    #[test]
    fn integral_uioss_holds_on_growth_with_unit_output() {
        // β(r,t) = r·e^{2r−t/(1+r)}, γ₂ = id, outer gain γ(s) = s·e^s.
        let sys = fixture("example-6-3-sigma1").unwrap();
        let gamma_outer = ComparisonFn::from_samples(
            |s| s * s.exp(),
            &TableSpec::on(1e-6, 40.0).with_knots(600),
        )
        .unwrap();
        let spec = EstimateSpec::IntegralUioss {
            beta: KLFn::named("exp-transient-decay").unwrap(),
            gamma_outer,
            gamma1: ComparisonFn::identity(),
            gamma2: ComparisonFn::identity(),
        };
        let battery = Battery {
            trajectories: 40,
            horizon: 12.0,
            shells: crate::comparison::log_spaced(6, 0.2, 5.0),
            ..Battery::default()
        };
        let report = check_estimate(&sys, &spec, &battery).unwrap();
        assert_eq!(report.verdict, Verdict::HoldsOnSamples, "{report:?}");
    }

    #[test]
    fn iiuoss_decay_closed_form() {
        // ẋ = −x, h = x, χ = γ = κ = id: ∫|x| = |ξ|(1−e^{−t}) ≤ |ξ|.
        let sys = fixture("scalar-decay").unwrap();
        let report = check_iiuoss(
            &sys,
            &ComparisonFn::identity(),
            &ComparisonFn::identity(),
            &ComparisonFn::identity(),
            &small_battery(3),
        )
        .unwrap();
        assert_eq!(report.verdict, Verdict::HoldsOnSamples);
    }

    #[test]
    fn iiuoss_on_escaping_fixture() {
        // κ(r) = r/1.15 dominates the escape-tail cost 1/(1+ε); the check
        // must pass including the escaping runs.
        let sys = fixture("remark-3-10").unwrap();
        let battery = Battery {
            trajectories: 48,
            horizon: 6.0,
            shells: crate::comparison::log_spaced(8, 0.1, 10.0),
            ..Battery::default()
        };
        let report = check_iiuoss(
            &sys,
            &ComparisonFn::identity(),
            &ComparisonFn::linear(1.0 / 1.15),
            &ComparisonFn::identity(),
            &battery,
        )
        .unwrap();
        assert_eq!(report.verdict, Verdict::HoldsOnSamples, "{report:?}");
        // escaping shells were actually exercised
        assert!(report.battery.trajectories > 0);

        // χ scaled 100x overwhelms κ on escaping initial conditions
        let scaled = check_iiuoss(
            &sys,
            &ComparisonFn::linear(100.0),
            &ComparisonFn::linear(1.0 / 1.15),
            &ComparisonFn::identity(),
            &battery,
        )
        .unwrap();
        assert_eq!(scaled.verdict, Verdict::Falsified);
    }

    #[test]
    fn gain_inflation_preserves_verdict() {
        let sys = fixture("scalar-decay").unwrap();
        let spec = EstimateSpec::Uoss {
            beta: KLFn::exp_decay(1.2),
            gamma2: ComparisonFn::identity(),
        };
        let battery = small_battery(11);
        let base = check_estimate(&sys, &spec, &battery).unwrap();
        assert_eq!(base.verdict, Verdict::HoldsOnSamples);
        let inflated = check_estimate(&sys, &spec.inflate(2.0), &battery).unwrap();
        assert_eq!(inflated.verdict, Verdict::HoldsOnSamples);
        assert!(inflated.worst_margin >= base.worst_margin - 1e-12);
    }

    #[test]
    fn iss_degeneration_without_outputs() {
        // p = 0: the γ₂ slot is ignored and the check reduces to the ISS
        // estimate.
        use crate::dynamics::{DynFn, OutFn, SystemModel};
        use std::sync::Arc;
        let f: DynFn = Arc::new(|x, u, _w, dx| dx[0] = -x[0] + u[0]);
        let h: OutFn = Arc::new(|_x, _y| {});
        let sys = SystemModel::new("decay-driven-no-output", (1, 1, 0, 0), f, h).unwrap();
        let spec = EstimateSpec::Uioss {
            beta: KLFn::exp_decay(2.0),
            gamma1: ComparisonFn::linear(2.0),
            gamma2: ComparisonFn::linear(1e-12),
        };
        let report = check_estimate(&sys, &spec, &small_battery(5)).unwrap();
        assert_eq!(report.verdict, Verdict::HoldsOnSamples, "{report:?}");
        assert!(report
            .battery
            .notes
            .iter()
            .any(|n| n.contains("gamma2 slot ignored")));
    }

    #[test]
    fn uoss_implies_uo_with_derived_slots() {
        // ρ₁ = ρ (the derived margin), χ₂ = 2ϑ, c = 0, χ₁ arbitrary.
        let sys = fixture("scalar-decay").unwrap();
        let beta = KLFn::exp_decay(1.0);
        let gamma2 = ComparisonFn::identity();
        let rho = gasmo_margin_from_uoss(&beta, &gamma2);
        let theta = beta.at_zero().premajorize_identity();
        let spec = EstimateSpec::Uo {
            rho1: rho,
            chi1: ComparisonFn::identity(),
            chi2: theta.scale(2.0),
            c: 0.0,
        };
        let report = check_estimate(&sys, &spec, &small_battery(13)).unwrap();
        assert_eq!(report.verdict, Verdict::HoldsOnSamples, "{report:?}");
    }

    #[test]
    fn gasmo_margin_makes_decay_pass_gasmo() {
        let sys = fixture("scalar-decay").unwrap();
        let beta = KLFn::exp_decay(1.0);
        let gamma2 = ComparisonFn::identity();
        let rho = gasmo_margin_from_uoss(&beta, &gamma2);
        let spec = EstimateSpec::Gasmo {
            rho,
            lambda: KLFn::exp_decay(1.0),
        };
        let report = check_estimate(&sys, &spec, &small_battery(17)).unwrap();
        assert_eq!(report.verdict, Verdict::HoldsOnSamples, "{report:?}");
    }

    #[test]
    fn incremental_identical_pairs_are_trivial() {
        let sys = fixture("scalar-decay-driven").unwrap();
        let spec = EstimateSpec::IncrementalUioss {
            beta: KLFn::exp_decay(1e-6),
            gamma1: ComparisonFn::linear(1e-6),
            gamma2: ComparisonFn::linear(1e-6),
        };
        // identical pair: left side is identically zero regardless of gains
        let battery = small_battery(19);
        let item = battery.generate(&sys).unwrap().into_iter().next().unwrap();
        let witness = Witness {
            x0: item.x0.clone(),
            u: item.u.clone(),
            w: item.w.clone(),
            horizon: battery.horizon,
            t: 0.0,
            lhs: 0.0,
            rhs: 0.0,
            x0_second: Some(item.x0.clone()),
            u_second: Some(item.u.clone()),
        };
        let report = replay_witness(&sys, &spec, &witness, 1.0, &battery).unwrap();
        assert_eq!(report.verdict, Verdict::HoldsOnSamples, "{report:?}");
    }
}
