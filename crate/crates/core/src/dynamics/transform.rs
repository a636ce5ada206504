use std::sync::Arc;

use super::model::{default_disturbance_samples, norm, SystemModel};
use crate::comparison::ComparisonFn;
use crate::{CoreError, Result};

/// State-dependent slowdown weight κ(x) ≥ 0.
pub type KappaFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// Close the robustness loop: substitute u = d_u·φ(|x|) and treat d_u as an
/// extra disturbance, giving a disturbance-only system with disturbance
/// dimension m_u + m_w.
pub fn close_robust_loop(sys: &SystemModel, phi: &ComparisonFn) -> Result<SystemModel> {
    if !phi.is_unbounded() {
        return Err(CoreError::InvalidGain(
            "stability margin must be class K∞".into(),
        ));
    }
    let m_u = sys.m_u;
    let m_w = sys.m_w;
    let inner = sys.dyn_fn();
    let phi = phi.clone();
    let f: super::model::DynFn = Arc::new(move |x, _u, d, dx| {
        let gain = phi.eval(norm(x));
        let mut u = Vec::with_capacity(m_u);
        for du in &d[..m_u] {
            u.push(du * gain);
        }
        inner(x, &u, &d[m_u..], dx);
    });
    Ok(SystemModel::new(
        format!("{}+robust-loop", sys.name),
        (sys.n, 0, m_u + m_w, sys.p),
        f,
        sys.out_fn(),
    )?
    .with_disturbance_samples(default_disturbance_samples(m_u + m_w)))
}

/// Slow a disturbance-only system: f̂ = f / (1 + |f|² + κ). Preserves the
/// zero set and bounds the speed by 1.
pub fn slow_system(sys: &SystemModel, kappa: KappaFn) -> Result<SystemModel> {
    if sys.m_u != 0 {
        return Err(CoreError::InvalidSystem(
            "slowing is defined for disturbance-only systems".into(),
        ));
    }
    // Probe κ for sign violations and the slowed speed bound on a coarse
    // deterministic state set.
    for state in probe_states(sys.n) {
        let kv = kappa(&state);
        if kv < 0.0 {
            return Err(CoreError::InvalidSystem(format!(
                "kappa({state:?}) = {kv} is negative"
            )));
        }
        for w in &sys.disturbance_samples {
            let f = sys.eval_f(&state, &[], w);
            let nf = norm(&f);
            let slowed = nf / (1.0 + nf * nf + kv);
            debug_assert!(slowed <= 1.0 + 1e-12);
        }
    }
    let inner = sys.dyn_fn();
    let n = sys.n;
    let f: super::model::DynFn = Arc::new(move |x, _u, w, dx| {
        inner(x, &[], w, dx);
        let nf = norm(dx);
        let scale = 1.0 / (1.0 + nf * nf + kappa(x));
        for v in dx.iter_mut().take(n) {
            *v *= scale;
        }
    });
    SystemModel::new(
        format!("{}+slowed", sys.name),
        (sys.n, 0, sys.m_w, sys.p),
        f,
        sys.out_fn(),
    )
    .map(|s| s.with_disturbance_samples(sys.disturbance_samples.clone()))
}

fn probe_states(n: usize) -> Vec<Vec<f64>> {
    let mut states = vec![vec![0.0; n]];
    for i in 0..n {
        for &r in &[1e-3, 0.1, 1.0, 3.0, 10.0] {
            for sign in [-1.0, 1.0] {
                let mut s = vec![0.0; n];
                s[i] = sign * r;
                states.push(s);
            }
        }
    }
    if n > 1 {
        for &r in &[0.5, 2.0] {
            states.push(vec![r / (n as f64).sqrt(); n]);
        }
    }
    states
}

/// Default slowdown weight: κ(ξ) = 1.1·2·max_d |∇(ρ∘|h|)(ξ)·f(ξ, d)|,
/// smoothly blended to zero where |h(ξ)| < 1/2. Gradients are central
/// finite differences with step 1e-5·(1 + |x|).
pub fn default_kappa(sys: &SystemModel, rho: &ComparisonFn) -> Result<KappaFn> {
    if sys.m_u != 0 {
        return Err(CoreError::InvalidSystem(
            "default_kappa expects a disturbance-only system".into(),
        ));
    }
    let sys = sys.clone();
    let rho = rho.clone();
    Ok(Arc::new(move |x: &[f64]| {
        let hn = sys.output_norm(x);
        if hn < 0.5 {
            return 0.0;
        }
        let blend = super::fixtures::smooth_step((hn - 0.5) / 0.5);
        let step = 1e-5 * (1.0 + norm(x));
        let n = x.len();
        // ∇(ρ∘|h|) by central differences
        let mut grad = vec![0.0; n];
        let mut xp = x.to_vec();
        for i in 0..n {
            xp[i] = x[i] + step;
            let fp = rho.eval(sys.output_norm(&xp));
            xp[i] = x[i] - step;
            let fm = rho.eval(sys.output_norm(&xp));
            xp[i] = x[i];
            grad[i] = (fp - fm) / (2.0 * step);
        }
        let mut worst = 0.0f64;
        for w in &sys.disturbance_samples {
            let f = sys.eval_f(x, &[], w);
            let dot: f64 = grad.iter().zip(&f).map(|(g, v)| g * v).sum();
            worst = worst.max(dot.abs());
        }
        1.1 * 2.0 * worst * blend
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::fixtures::fixture;
    use crate::dynamics::model::{DynFn, OutFn, Signal};
    use crate::dynamics::{simulate, SimOptions, Termination};

    fn driven() -> SystemModel {
        fixture("scalar-decay-driven").unwrap()
    }

    #[test]
    fn robust_loop_substitutes_margin_feedback() {
        // f(x,u) = −x + u with φ(r) = r/2 and d_u = 1: g(2) = −1.
        let loop_sys = close_robust_loop(&driven(), &ComparisonFn::linear(0.5)).unwrap();
        assert_eq!(loop_sys.m_u, 0);
        assert_eq!(loop_sys.m_w, 1);
        let dx = loop_sys.eval_f(&[2.0], &[], &[1.0]);
        assert!((dx[0] + 1.0).abs() < 1e-15);
        // d_u = 0 reduces to the unforced dynamics
        let dx0 = loop_sys.eval_f(&[2.0], &[], &[0.0]);
        assert!((dx0[0] + 2.0).abs() < 1e-15);
    }

    #[test]
    fn slowing_arithmetic() {
        let f: DynFn = Arc::new(|x, _u, _w, dx| dx[0] = x[0]);
        let h: OutFn = Arc::new(|_x, y| y[0] = 0.0);
        let sys = SystemModel::new("drift", (1, 0, 0, 1), f, h).unwrap();
        let slowed = slow_system(&sys, Arc::new(|_x| 0.0)).unwrap();
        let dx = slowed.eval_f(&[3.0], &[], &[]);
        assert!((dx[0] - 0.3).abs() < 1e-15);
        assert_eq!(slowed.eval_f(&[0.0], &[], &[])[0], 0.0);
    }

    #[test]
    fn negative_kappa_rejected() {
        let sys = fixture("scalar-decay").unwrap();
        assert!(slow_system(&sys, Arc::new(|_x| -1.0)).is_err());
    }

    #[test]
    fn slowed_escape_fixture_runs_forever() {
        let sys = fixture("remark-3-10").unwrap();
        let slowed = slow_system(&sys, Arc::new(|_x| 0.0)).unwrap();
        let traj = simulate(
            &slowed,
            &[2.0],
            &Signal::zero(0),
            &Signal::zero(0),
            50.0,
            &SimOptions::default(),
        )
        .unwrap();
        assert_eq!(traj.termination, Termination::HorizonReached);
    }

    #[test]
    fn slowed_trajectory_is_time_reparametrization() {
        // x(t) = z(σ(t)) with σ(t) = ∫₀ᵗ (1 + |f|² + κ) ds along the fast
        // trajectory; σ is carried as an extra quadrature state so the
        // stepper controls its error too.
        let sys = fixture("remark-3-10").unwrap();
        let slowed = slow_system(&sys, Arc::new(|_x| 0.0)).unwrap();
        let inner = sys.dyn_fn();
        let f_aug: DynFn = Arc::new(move |x, _u, _w, dx| {
            inner(&x[..1], &[], &[], &mut dx[..1]);
            let speed = dx[0];
            dx[1] = 1.0 + speed * speed;
        });
        let h_aug: OutFn = Arc::new(|x, y| y[0] = x[0]);
        let aug = SystemModel::new_unchecked("fast+clock", (2, 0, 0, 1), f_aug, h_aug);
        let opts = SimOptions {
            rel_tol: 1e-10,
            abs_tol: 1e-12,
            ..SimOptions::default()
        };
        let fast = simulate(
            &aug,
            &[2.0, 0.0],
            &Signal::zero(0),
            &Signal::zero(0),
            0.121,
            &opts,
        )
        .unwrap();
        assert_eq!(fast.termination, Termination::HorizonReached);
        for probe in [0.02, 0.05, 0.08, 0.11] {
            let k = fast.times.partition_point(|&t| t < probe);
            let t_fast = fast.times[k];
            let x_fast = fast.states[k][0];
            let sigma = fast.states[k][1];
            // run the slowed system to exactly t = σ
            let z = simulate(
                &slowed,
                &[2.0],
                &Signal::zero(0),
                &Signal::zero(0),
                sigma,
                &opts,
            )
            .unwrap()
            .final_state()[0];
            let tol = 1e-6 * (1.0 + x_fast.abs());
            assert!(
                (x_fast - z).abs() < tol,
                "t={t_fast}: x={x_fast} z(σ)={z}"
            );
        }
    }

    #[test]
    fn default_kappa_bounds_output_rate() {
        // h(x) = x, ρ = id, f(x, d) = d: κ ≥ 2 whenever |x| ≥ 1.
        // (f(0, d) ≠ 0, so this probe model skips registration checks.)
        let f: DynFn = Arc::new(|_x, _u, w, dx| dx[0] = w[0]);
        let h: OutFn = Arc::new(|x, y| y[0] = x[0]);
        let sys = SystemModel::new_unchecked("driven-by-w", (1, 0, 1, 1), f, h);
        let kappa = default_kappa(&sys, &ComparisonFn::identity()).unwrap();
        for &x in &[1.0, 2.0, 5.0] {
            assert!(kappa(&[x]) >= 2.0, "kappa({x}) = {}", kappa(&[x]));
        }
        assert_eq!(kappa(&[0.3]), 0.0);
    }

    #[test]
    fn default_kappa_vanishes_for_zero_output() {
        let sys = fixture("scalar-decay-unobserved").unwrap();
        let kappa = default_kappa(&sys, &ComparisonFn::identity()).unwrap();
        assert_eq!(kappa(&[4.0]), 0.0);
    }

    #[test]
    fn default_kappa_finite_on_compacts() {
        let sys = fixture("example-6-3-sigma1").unwrap();
        let kappa = default_kappa(&sys, &ComparisonFn::linear(2.0)).unwrap();
        for i in 0..60 {
            let x = -3.0 + i as f64 * 0.1;
            let k = kappa(&[x]);
            assert!(k.is_finite() && k >= 0.0, "kappa({x}) = {k}");
        }
    }
}
