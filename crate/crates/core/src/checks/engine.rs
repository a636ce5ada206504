use rayon::prelude::*;

use super::battery::{Battery, BatteryItem};
use super::report::{BatteryStats, CheckReport, Verdict, Witness};
use super::spec::EstimateSpec;
use crate::comparison::ComparisonFn;
use crate::dynamics::{norm, simulate, trapezoid_prefix, Signal, SystemModel, Trajectory};
use crate::{CoreError, Result};

/// Per-item outcome before reduction.
enum ItemOutcome {
    Tested {
        min_margin: f64,
        /// Worst tolerance-exceeding violation, scored by relative excess.
        violation: Option<(f64, Witness)>,
        time_points: usize,
    },
    Skipped(String),
}

/// Test a stability estimate on every battery sample, evaluating the
/// inequality at every trajectory knot. Sup-norms are running maxima over
/// knots (exact for the piecewise-constant inputs); integrals use the
/// trapezoid rule on the trajectory grid. Trajectories that escape are
/// tested up to their last knot.
pub fn check_estimate(
    sys: &SystemModel,
    spec: &EstimateSpec,
    battery: &Battery,
) -> Result<CheckReport> {
    if let EstimateSpec::IncrementalUioss { .. } = spec {
        return check_incremental(sys, spec, battery);
    }
    let items = battery.generate(sys)?;
    let outcomes: Vec<ItemOutcome> = items
        .par_iter()
        .map(|item| evaluate_item(sys, spec, item, battery))
        .collect();
    Ok(reduce_outcomes(sys, outcomes))
}

/// Finite-energy variant: integral accumulators on both sides.
pub fn check_iiuoss(
    sys: &SystemModel,
    chi: &ComparisonFn,
    kappa: &ComparisonFn,
    gamma: &ComparisonFn,
    battery: &Battery,
) -> Result<CheckReport> {
    check_estimate(
        sys,
        &EstimateSpec::IiUoss {
            chi: chi.clone(),
            kappa: kappa.clone(),
            gamma: gamma.clone(),
        },
        battery,
    )
}

/// Incremental estimate over trajectory pairs sharing the disturbance.
pub fn check_incremental(
    sys: &SystemModel,
    spec: &EstimateSpec,
    battery: &Battery,
) -> Result<CheckReport> {
    let EstimateSpec::IncrementalUioss { .. } = spec else {
        return Err(CoreError::InvalidBattery(
            "check_incremental needs an incremental-uioss spec".into(),
        ));
    };
    let pairs = battery.generate_pairs(sys)?;
    let outcomes: Vec<ItemOutcome> = pairs
        .par_iter()
        .map(|(item, x0b, ub)| pair_outcome(sys, spec, item, x0b, ub, battery))
        .collect();
    Ok(reduce_outcomes(sys, outcomes))
}

/// Re-run a recorded witness, typically at tighter integrator tolerance,
/// and report whether the violation reproduces.
pub fn replay_witness(
    sys: &SystemModel,
    spec: &EstimateSpec,
    witness: &Witness,
    tighten: f64,
    base: &Battery,
) -> Result<CheckReport> {
    let mut battery = base.clone();
    battery.sim = base.sim.tightened(tighten);
    battery.horizon = witness.horizon;
    let item = BatteryItem {
        x0: witness.x0.clone(),
        u: witness.u.clone(),
        w: witness.w.clone(),
    };
    let outcome = match (&witness.x0_second, &witness.u_second) {
        (Some(x0b), Some(ub)) => {
            let EstimateSpec::IncrementalUioss { .. } = spec else {
                return Err(CoreError::InvalidBattery(
                    "paired witness requires an incremental-uioss spec".into(),
                ));
            };
            pair_outcome(sys, spec, &item, x0b, ub, &battery)
        }
        _ => evaluate_item(sys, spec, &item, &battery),
    };
    let mut report = reduce_outcomes(sys, vec![outcome]);
    report.battery.notes.push(format!(
        "replay of witness at t = {} with {tighten}x tighter tolerance",
        witness.t
    ));
    Ok(report)
}

fn reduce_outcomes(sys: &SystemModel, outcomes: Vec<ItemOutcome>) -> CheckReport {
    let mut stats = BatteryStats::default();
    let mut worst_margin = f64::INFINITY;
    let mut witness: Option<Witness> = None;
    if sys.p == 0 {
        stats.notes.push("gamma2 slot ignored (p = 0)".into());
    }
    if sys.m_u == 0 {
        stats.notes.push("gamma1 slot ignored (m_u = 0)".into());
    }
    let mut worst_excess = f64::NEG_INFINITY;
    for (idx, outcome) in outcomes.into_iter().enumerate() {
        match outcome {
            ItemOutcome::Tested {
                min_margin,
                violation,
                time_points,
            } => {
                stats.trajectories += 1;
                stats.time_points += time_points;
                worst_margin = worst_margin.min(min_margin);
                if let Some((excess, w)) = violation {
                    if excess > worst_excess {
                        worst_excess = excess;
                        witness = Some(w);
                    }
                }
            }
            ItemOutcome::Skipped(note) => {
                stats.skipped += 1;
                stats.notes.push(format!("item {idx}: {note}"));
            }
        }
    }
    let verdict = if witness.is_some() {
        Verdict::Falsified
    } else {
        Verdict::HoldsOnSamples
    };
    CheckReport {
        verdict,
        witness,
        worst_margin,
        battery: stats,
    }
}

fn evaluate_item(
    sys: &SystemModel,
    spec: &EstimateSpec,
    item: &BatteryItem,
    battery: &Battery,
) -> ItemOutcome {
    let traj = match simulate(sys, &item.x0, &item.u, &item.w, battery.horizon, &battery.sim) {
        Ok(t) => t,
        Err(e) => return ItemOutcome::Skipped(format!("integration failed: {e}")),
    };
    if traj.len() < 2 {
        return ItemOutcome::Skipped("escaped before any knot".into());
    }
    let series = margin_series(sys, spec, item, &traj);
    if series.is_empty() {
        return ItemOutcome::Skipped("no knot satisfied the estimate's precondition".into());
    }
    let mut min_margin = f64::INFINITY;
    let mut violation: Option<(f64, usize, f64, f64)> = None;
    for &(k, lhs, rhs) in &series {
        min_margin = min_margin.min(rhs - lhs);
        if battery.falsify_tol.violated(lhs, rhs) {
            let excess = (lhs - rhs) / lhs.abs().max(rhs.abs()).max(1.0);
            if violation.map_or(true, |(e, ..)| excess > e) {
                violation = Some((excess, k, lhs, rhs));
            }
        }
    }
    let violation = violation.map(|(excess, k, lhs, rhs)| {
        (
            excess,
            Witness {
                x0: item.x0.clone(),
                u: item.u.clone(),
                w: item.w.clone(),
                horizon: battery.horizon,
                t: traj.times[k],
                lhs,
                rhs,
                x0_second: None,
                u_second: None,
            },
        )
    });
    ItemOutcome::Tested {
        min_margin,
        violation,
        time_points: series.len(),
    }
}

/// (knot index, lhs, rhs) for every knot where the estimate applies.
fn margin_series(
    sys: &SystemModel,
    spec: &EstimateSpec,
    item: &BatteryItem,
    traj: &Trajectory,
) -> Vec<(usize, f64, f64)> {
    let nk = traj.len();
    let x0n = norm(&item.x0);
    let xnorm: Vec<f64> = traj.states.iter().map(|x| norm(x)).collect();
    let ynorm: Vec<f64> = traj.outputs.iter().map(|y| norm(y)).collect();
    let mut sup_y = Vec::with_capacity(nk);
    let mut m = 0.0f64;
    for &v in &ynorm {
        m = m.max(v);
        sup_y.push(m);
    }
    let mut out = Vec::with_capacity(nk);
    match spec {
        EstimateSpec::Uioss {
            beta,
            gamma1,
            gamma2,
        } => {
            for k in 0..nk {
                let t = traj.times[k];
                let mut rhs = beta.eval(x0n, t);
                if sys.m_u > 0 {
                    rhs = rhs.max(gamma1.eval(item.u.sup_norm_until(t)));
                }
                if sys.p > 0 {
                    rhs = rhs.max(gamma2.eval(sup_y[k]));
                }
                out.push((k, xnorm[k], rhs));
            }
        }
        EstimateSpec::Uoss { beta, gamma2 } => {
            for k in 0..nk {
                let mut rhs = beta.eval(x0n, traj.times[k]);
                if sys.p > 0 {
                    rhs = rhs.max(gamma2.eval(sup_y[k]));
                }
                out.push((k, xnorm[k], rhs));
            }
        }
        EstimateSpec::Gasmo { rho, lambda } => {
            // enforced only while |x| ≥ ρ(|y|) has held since t = 0
            for k in 0..nk {
                if xnorm[k] < rho.eval(ynorm[k]) {
                    break;
                }
                out.push((k, xnorm[k], lambda.eval(x0n, traj.times[k])));
            }
        }
        EstimateSpec::IiUoss { chi, kappa, gamma } => {
            let int_chi = trapezoid_prefix(traj, |k| chi.eval(xnorm[k]));
            let int_gamma = trapezoid_prefix(traj, |k| gamma.eval(ynorm[k]));
            let kappa0 = kappa.eval(x0n);
            for k in 0..nk {
                out.push((k, int_chi[k], kappa0 + int_gamma[k]));
            }
        }
        EstimateSpec::Uo {
            rho1,
            chi1,
            chi2,
            c,
        } => {
            // enforced only while |y| ≤ ρ₁(|x|) has held since t = 0
            let chi2_x0 = chi2.eval(x0n);
            for k in 0..nk {
                if ynorm[k] > rho1.eval(xnorm[k]) {
                    break;
                }
                out.push((k, xnorm[k], chi1.eval(traj.times[k]) + chi2_x0 + c));
            }
        }
        EstimateSpec::IntegralUioss {
            beta,
            gamma_outer,
            gamma1,
            gamma2,
        } => {
            let int_u =
                trapezoid_prefix(traj, |k| gamma1.eval(norm(item.u.eval(traj.times[k]))));
            let int_y = trapezoid_prefix(traj, |k| gamma2.eval(ynorm[k]));
            for k in 0..nk {
                let mut rhs = beta.eval(x0n, traj.times[k]);
                if sys.m_u > 0 {
                    rhs = rhs.max(gamma_outer.eval(int_u[k]));
                }
                if sys.p > 0 {
                    rhs = rhs.max(gamma_outer.eval(int_y[k]));
                }
                out.push((k, xnorm[k], rhs));
            }
        }
        EstimateSpec::MixedIntegralUioss {
            alpha_x,
            beta,
            gamma1,
            gamma2,
        } => {
            let int_u =
                trapezoid_prefix(traj, |k| gamma1.eval(norm(item.u.eval(traj.times[k]))));
            for k in 0..nk {
                let mut rhs = beta.eval(x0n, traj.times[k]) + int_u[k];
                if sys.p > 0 {
                    rhs += gamma2.eval(sup_y[k]);
                }
                out.push((k, alpha_x.eval(xnorm[k]), rhs));
            }
        }
        EstimateSpec::IncrementalUioss { .. } => unreachable!("handled by check_incremental"),
    }
    out
}

fn pair_outcome(
    sys: &SystemModel,
    spec: &EstimateSpec,
    item: &BatteryItem,
    x0b: &[f64],
    ub: &Signal,
    battery: &Battery,
) -> ItemOutcome {
    let EstimateSpec::IncrementalUioss {
        beta,
        gamma1,
        gamma2,
    } = spec
    else {
        unreachable!("pair_outcome is only called with incremental specs")
    };
    let ta = simulate(sys, &item.x0, &item.u, &item.w, battery.horizon, &battery.sim);
    let tb = simulate(sys, x0b, ub, &item.w, battery.horizon, &battery.sim);
    let (ta, tb) = match (ta, tb) {
        (Ok(a), Ok(b)) => (a, b),
        (Err(e), _) | (_, Err(e)) => {
            return ItemOutcome::Skipped(format!("integration failed: {e}"))
        }
    };
    if ta.len() < 2 || tb.len() < 2 {
        return ItemOutcome::Skipped("escaped before any knot".into());
    }
    // Mismatched spans (finite escape): test on the intersection.
    let t_end = ta.final_time().min(tb.final_time());
    let mut times: Vec<f64> = ta
        .times
        .iter()
        .chain(tb.times.iter())
        .copied()
        .filter(|&t| t <= t_end)
        .collect();
    times.sort_by(f64::total_cmp);
    times.dedup();

    let dx0 = norm(
        &item
            .x0
            .iter()
            .zip(x0b)
            .map(|(a, b)| a - b)
            .collect::<Vec<_>>(),
    );
    // |u₁ − u₂| is piecewise constant with jumps at the merged switch set.
    let mut du_events: Vec<f64> = item
        .u
        .switch_times()
        .iter()
        .chain(ub.switch_times())
        .copied()
        .collect();
    du_events.push(0.0);
    du_events.sort_by(f64::total_cmp);
    du_events.dedup();
    let mut event_idx = 0usize;
    let mut sup_du = 0.0f64;

    let mut sup_dy = 0.0f64;
    let mut min_margin = f64::INFINITY;
    let mut violation: Option<(f64, f64, f64, f64)> = None;
    let mut points = 0usize;
    for &t in &times {
        while event_idx < du_events.len() && du_events[event_idx] <= t {
            let s = du_events[event_idx];
            let d: Vec<f64> = item
                .u
                .eval(s)
                .iter()
                .zip(ub.eval(s))
                .map(|(a, b)| a - b)
                .collect();
            sup_du = sup_du.max(norm(&d));
            event_idx += 1;
        }
        let xa = ta.state_at(t);
        let xb = tb.state_at(t);
        let dy: Vec<f64> = sys
            .output(&xa)
            .iter()
            .zip(sys.output(&xb))
            .map(|(a, b)| a - b)
            .collect();
        sup_dy = sup_dy.max(norm(&dy));
        let dx: Vec<f64> = xa.iter().zip(&xb).map(|(a, b)| a - b).collect();
        let lhs = norm(&dx);
        let mut rhs = beta.eval(dx0, t);
        if sys.m_u > 0 {
            rhs = rhs.max(gamma1.eval(sup_du));
        }
        if sys.p > 0 {
            rhs = rhs.max(gamma2.eval(sup_dy));
        }
        points += 1;
        min_margin = min_margin.min(rhs - lhs);
        if battery.falsify_tol.violated(lhs, rhs) {
            let excess = (lhs - rhs) / lhs.abs().max(rhs.abs()).max(1.0);
            if violation.map_or(true, |(e, ..)| excess > e) {
                violation = Some((excess, t, lhs, rhs));
            }
        }
    }
    let violation = violation.map(|(excess, t, lhs, rhs)| {
        (
            excess,
            Witness {
                x0: item.x0.clone(),
                u: item.u.clone(),
                w: item.w.clone(),
                horizon: battery.horizon,
                t,
                lhs,
                rhs,
                x0_second: Some(x0b.to_vec()),
                u_second: Some(ub.clone()),
            },
        )
    });
    ItemOutcome::Tested {
        min_margin,
        violation,
        time_points: points,
    }
}
