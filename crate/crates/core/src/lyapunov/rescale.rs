use std::sync::Arc;

use crate::comparison::{ComparisonFn, Interp, MonotoneTable};
use crate::lyapunov::candidate::{DecayTerm, Gradient, LyapCandidate};
use crate::{CoreError, Result};

/// Knot layout for the rescaling profile ρ.
#[derive(Clone, Debug)]
pub struct RescaleOptions {
    /// Knots per decade of the log grid carrying ρ.
    pub knots_per_decade: usize,
    /// Smallest and largest value-arguments covered by the ρ table.
    pub v_min: f64,
    pub v_max: f64,
}

impl Default for RescaleOptions {
    fn default() -> Self {
        Self {
            knots_per_decade: 48,
            v_min: 1e-7,
            v_max: 1e7,
        }
    }
}

/// Rescale a verified candidate into exponential-decay form W = ρ∘V with
/// d/dt W ≤ −W + σ̂₁(|u|) + σ̂₂(|y|).
///
/// The decay gain is first pushed to value arguments, α' = α∘α₂⁻¹; the
/// profile then solves ρ'(v)·α'(v)/2 = ρ(v) by quadrature of
/// ln ρ(v) = ∫ 2/α' from the anchor ρ(1) = 1 in both directions (log
/// domain, so pure power laws come out exact), extended by ρ(0) = 0.
/// The new gains take the worst of the two balance cases:
/// σ̂ᵢ(r) = 2σᵢ(r)·sup{ρ'(v) : v ≤ α'⁻¹(4σᵢ(r))}.
pub fn exp_decay_rescale(cand: &LyapCandidate, opts: &RescaleOptions) -> Result<LyapCandidate> {
    let DecayTerm::StateGain(alpha) = &cand.decay else {
        return Err(CoreError::LyapunovEval(
            "candidate is already in exponential-decay form".into(),
        ));
    };
    if !alpha.is_unbounded() {
        return Err(CoreError::LyapunovEval(
            "rescaling needs a class K∞ decay gain".into(),
        ));
    }
    let alpha_prime = alpha.compose(&cand.alpha2.invert()?);
    let alpha_prime_inv = alpha_prime.invert()?;

    // ln ρ accumulated by trapezoid steps in σ = ln v, integrand
    // g(σ) = 2·e^σ / α'(e^σ).
    let g = |v: f64| 2.0 * v / alpha_prime.eval(v);
    let step = std::f64::consts::LN_10 / opts.knots_per_decade as f64;
    let mut knots: Vec<(f64, f64)> = vec![(1.0, 0.0)];
    // upward sweep
    let mut v = 1.0;
    let mut ln_rho = 0.0;
    while v < opts.v_max {
        let v_next = v * step.exp();
        let incr = 0.5 * (g(v) + g(v_next)) * step;
        if !incr.is_finite() {
            return Err(CoreError::LyapunovEval(format!(
                "rescale integrand degenerates near v = {v}; adjust the grid or the anchor"
            )));
        }
        ln_rho += incr;
        if ln_rho > 690.0 {
            return Err(CoreError::LyapunovEval(format!(
                "rescale profile overflows before the grid edge (v = {v_next}); \
                 shrink v_max or adjust the anchor"
            )));
        }
        knots.push((v_next, ln_rho));
        v = v_next;
    }
    // downward sweep
    let mut v = 1.0;
    let mut ln_rho = 0.0;
    while v > opts.v_min {
        let v_next = v * (-step).exp();
        let incr = 0.5 * (g(v) + g(v_next)) * step;
        if !incr.is_finite() {
            return Err(CoreError::LyapunovEval(format!(
                "rescale integrand degenerates near v = {v}; adjust the grid or the anchor"
            )));
        }
        ln_rho -= incr;
        knots.push((v_next, ln_rho));
        v = v_next;
        if ln_rho < -690.0 {
            break; // ρ underflows toward its ρ(0) = 0 extension
        }
    }
    knots.sort_by(|a, b| a.0.total_cmp(&b.0));
    let rs: Vec<f64> = knots.iter().map(|&(v, _)| v).collect();
    let vs: Vec<f64> = knots.iter().map(|&(_, l)| l.exp()).collect();
    let rho = ComparisonFn::from_table(MonotoneTable::from_knots(
        rs.clone(),
        vs.clone(),
        true,
        Interp::LogLog,
    )?);

    // ρ'(v) = 2ρ(v)/α'(v) from the defining relation; its running max over
    // the knots feeds the gain construction.
    let mut rho_prime_env = Vec::with_capacity(rs.len());
    let mut run = 0.0f64;
    for (&v, &r) in rs.iter().zip(&vs) {
        run = run.max(2.0 * r / alpha_prime.eval(v).max(1e-300));
        rho_prime_env.push(run);
    }
    let rho_prime_max = ComparisonFn::from_table(MonotoneTable::from_knots(
        rs.clone(),
        rho_prime_env,
        true,
        Interp::LogLog,
    )?);

    let hat = |sigma: &Option<ComparisonFn>| -> Result<Option<ComparisonFn>> {
        let Some(sigma) = sigma else {
            return Ok(None);
        };
        let sigma = sigma.clone();
        let rho_env = rho_prime_max.clone();
        let apinv = alpha_prime_inv.clone();
        let table = MonotoneTable::sample(
            |r| {
                let s = sigma.eval(r);
                2.0 * s * rho_env.eval(apinv.eval(4.0 * s))
            },
            &crate::comparison::TableSpec::on(1e-6, 1e5)
                .with_knots(400)
                .log_log(),
        )?;
        Ok(Some(ComparisonFn::from_table(table)))
    };
    let sigma1_hat = hat(&cand.sigma1)?;
    let sigma2_hat = hat(&cand.sigma2)?;

    let inner = cand.clone();
    let rho_v = rho.clone();
    let value: super::candidate::ScalarFn =
        Arc::new(move |x| rho_v.eval(inner.value(x)));
    let inner_g = cand.clone();
    let rho_g = rho.clone();
    let ap_g = alpha_prime.clone();
    let grad: super::candidate::GradFn = Arc::new(move |x| {
        let v = inner_g.value(x);
        let slope = if v <= 0.0 {
            0.0
        } else {
            2.0 * rho_g.eval(v) / ap_g.eval(v)
        };
        inner_g.grad(x).into_iter().map(|d| slope * d).collect()
    });

    Ok(LyapCandidate::new(
        format!("{}+exp-rescaled", cand.name),
        value,
        Gradient::ClosedForm(grad),
        rho.compose(&cand.alpha1),
        rho.compose(&cand.alpha2),
        DecayTerm::Value,
        sigma1_hat,
        sigma2_hat,
    ))
}

/// The rescaling profile alone (mostly for diagnostics and tests).
pub fn rescale_profile(cand: &LyapCandidate, opts: &RescaleOptions) -> Result<ComparisonFn> {
    let rescaled = exp_decay_rescale(cand, opts)?;
    // alpha1 of the rescaled candidate is ρ∘α₁; recover ρ by composing with
    // the inverse when α₁ is invertible. Tests use α₁ = id so this is ρ.
    Ok(rescaled.alpha1.compose(&cand.alpha1.invert()?))
}
