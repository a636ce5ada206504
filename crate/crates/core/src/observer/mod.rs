//! Norm estimators: scalar auxiliary systems driven by (u, y) whose state
//! eventually upper-bounds the plant's storage value.
//!
//! From an exponential-decay candidate the estimator is
//! ṗ = −p + σ₁(|u|) + σ₂(|y|) with readout k(s, r) = s; the plant and the
//! estimator integrate as one augmented system under a shared step
//! controller, since the contracted gap d/dt(V − p) ≤ −(V − p) is a
//! property of the coupled flow.

use std::io::Write;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::checks::{Battery, CheckReport, EstimateSpec};
use crate::comparison::{ComparisonFn, KLFn};
use crate::dynamics::{
    norm, simulate, DynFn, OutFn, Signal, SimOptions, SystemModel, Termination, Trajectory,
};
use crate::lyapunov::{DecayTerm, LyapCandidate};
use crate::{CoreError, Result};

/// Scalar norm estimator with the bound functions of its contract:
/// ρ_est(r) = α₁⁻¹(2r) and β_est(s, t) = α₁⁻¹(4·e^{−t}·α₂(s)), where α₂ is
/// premajorized so that r ≤ α₂(r).
#[derive(Clone)]
pub struct NormEstimator {
    pub sigma1: Option<ComparisonFn>,
    pub sigma2: Option<ComparisonFn>,
    pub rho_est: ComparisonFn,
    pub beta_est: KLFn,
    candidate: LyapCandidate,
}

impl NormEstimator {
    pub fn candidate(&self) -> &LyapCandidate {
        &self.candidate
    }

    fn sigma1_at(&self, r: f64) -> f64 {
        self.sigma1.as_ref().map_or(0.0, |s| s.eval(r))
    }

    fn sigma2_at(&self, r: f64) -> f64 {
        self.sigma2.as_ref().map_or(0.0, |s| s.eval(r))
    }
}

/// Build the estimator from an exponential-decay candidate.
pub fn build_estimator(cand: &LyapCandidate) -> Result<NormEstimator> {
    let DecayTerm::Value = cand.decay else {
        return Err(CoreError::Estimator(
            "candidate is not in exponential-decay form; run exp_decay_rescale first".into(),
        ));
    };
    let alpha1_inv = cand.alpha1.invert().map_err(|e| {
        CoreError::Estimator(format!("lower bound must be invertible: {e}"))
    })?;
    let alpha2_major = cand.alpha2.premajorize_identity();
    let rho_est = alpha1_inv.compose(&ComparisonFn::linear(2.0));
    let beta_est = KLFn::factored(
        alpha1_inv.compose(&ComparisonFn::linear(4.0)),
        alpha2_major,
    );
    Ok(NormEstimator {
        sigma1: cand.sigma1.clone(),
        sigma2: cand.sigma2.clone(),
        rho_est,
        beta_est,
        candidate: cand.clone(),
    })
}

/// Joint plant/estimator run.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CoupledTrace {
    pub times: Vec<f64>,
    pub state_norms: Vec<f64>,
    pub v_values: Vec<f64>,
    pub p_values: Vec<f64>,
    /// β_est(|ξ| + |ζ|, t) + ρ_est(|p(t)|), the estimator contract bound.
    pub bounds: Vec<f64>,
    pub step_errors: Vec<f64>,
    pub termination: Termination,
}

impl CoupledTrace {
    /// CSV export: t, |x|, V(x), p, bound.
    pub fn write_csv(&self, mut out: impl Write) -> std::io::Result<()> {
        writeln!(out, "t,|x|,V,p,bound")?;
        for k in 0..self.times.len() {
            writeln!(
                out,
                "{:.12e},{:.12e},{:.12e},{:.12e},{:.12e}",
                self.times[k],
                self.state_norms[k],
                self.v_values[k],
                self.p_values[k],
                self.bounds[k]
            )?;
        }
        Ok(())
    }
}

/// Integrate the augmented system [x; p] and record the contract traces.
/// A plant escape truncates the estimator trace at the escape knot.
pub fn run_coupled(
    sys: &SystemModel,
    est: &NormEstimator,
    x0: &[f64],
    zeta0: f64,
    u: &Signal,
    w: &Signal,
    horizon: f64,
    opts: &SimOptions,
) -> Result<CoupledTrace> {
    let aug = coupled_model(sys, est)?;
    let mut aug_x0 = x0.to_vec();
    aug_x0.push(zeta0);
    let traj = simulate(&aug, &aug_x0, u, w, horizon, opts)?;
    Ok(trace_from(sys, est, x0, zeta0, &traj))
}

fn coupled_model(sys: &SystemModel, est: &NormEstimator) -> Result<SystemModel> {
    let n = sys.n;
    let inner = sys.dyn_fn();
    let out = sys.out_fn();
    let p_dim = sys.p;
    let est2 = est.clone();
    let f: DynFn = Arc::new(move |xp, u, w, dxp| {
        let (x, p) = xp.split_at(n);
        inner(x, u, w, &mut dxp[..n]);
        let mut y = vec![0.0; p_dim];
        out(x, &mut y);
        dxp[n] = -p[0] + est2.sigma1_at(norm(u)) + est2.sigma2_at(norm(&y));
    });
    let out2 = sys.out_fn();
    let h: OutFn = Arc::new(move |xp, y| out2(&xp[..xp.len() - 1], y));
    // the estimator state preserves the origin: σ(0) = 0 on both slots
    SystemModel::new(
        format!("{}+norm-estimator", sys.name),
        (n + 1, sys.m_u, sys.m_w, sys.p),
        f,
        h,
    )
    .map(|m| m.with_disturbance_samples(sys.disturbance_samples.clone()))
}

fn trace_from(
    sys: &SystemModel,
    est: &NormEstimator,
    x0: &[f64],
    zeta0: f64,
    traj: &Trajectory,
) -> CoupledTrace {
    let n = sys.n;
    let s0 = norm(x0) + zeta0.abs();
    let mut trace = CoupledTrace {
        times: traj.times.clone(),
        state_norms: Vec::with_capacity(traj.len()),
        v_values: Vec::with_capacity(traj.len()),
        p_values: Vec::with_capacity(traj.len()),
        bounds: Vec::with_capacity(traj.len()),
        step_errors: traj.step_errors.clone(),
        termination: traj.termination.clone(),
    };
    for (k, state) in traj.states.iter().enumerate() {
        let (x, p) = state.split_at(n);
        trace.state_norms.push(norm(x));
        trace.v_values.push(est.candidate.value(x));
        trace.p_values.push(p[0]);
        trace
            .bounds
            .push(est.beta_est.eval(s0, traj.times[k]) + est.rho_est.eval(p[0].abs()));
    }
    trace
}

/// Test the composite state-norm estimate assembled from the estimator
/// contract with ζ = 0:
///
/// |x(t)| ≤ max{2·β_est(|ξ|, t), 4·ρ_est(σ₁(‖u‖)), 4·ρ_est(σ₂(‖y‖))}.
pub fn verify_estimator_implies_uioss(
    sys: &SystemModel,
    est: &NormEstimator,
    battery: &Battery,
) -> Result<CheckReport> {
    let spec = assembled_spec(est);
    crate::checks::check_estimate(sys, &spec, battery)
}

/// The composite estimate as a reusable spec.
pub fn assembled_spec(est: &NormEstimator) -> EstimateSpec {
    let KLFn::Factored { mu1, mu2 } = &est.beta_est else {
        unreachable!("build_estimator always produces a factored bound")
    };
    let beta = KLFn::factored(mu1.scale(2.0), mu2.clone());
    let wrap = |s: &Option<ComparisonFn>| -> ComparisonFn {
        match s {
            Some(s) => est.rho_est.compose(s).scale(4.0),
            // slot unused (checked systems without that port ignore it)
            None => ComparisonFn::linear(1e-9),
        }
    };
    EstimateSpec::Uioss {
        beta,
        gamma1: wrap(&est.sigma1),
        gamma2: wrap(&est.sigma2),
    }
}
