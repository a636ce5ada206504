use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::lyap::{is_hurwitz, lyap_residual, lyap_solve};
use super::mat::{cholesky, expm, spectral_norm, Mat};
use crate::comparison::{ComparisonFn, KLFn};
use crate::dynamics::{DynFn, OutFn, SystemModel};
use crate::{CoreError, Result};

/// ẋ = Ax + Bu, y = Cx.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LinearSystem {
    pub a: Mat,
    pub b: Mat,
    pub c: Mat,
}

impl LinearSystem {
    pub fn new(a: Mat, b: Mat, c: Mat) -> Result<Self> {
        if !a.is_square() || b.rows != a.rows || c.cols != a.cols {
            return Err(CoreError::Linear(format!(
                "incompatible dimensions: A {}x{}, B {}x{}, C {}x{}",
                a.rows, a.cols, b.rows, b.cols, c.rows, c.cols
            )));
        }
        if a.rows > 32 {
            return Err(CoreError::Linear(
                "dense analysis is limited to n <= 32".into(),
            ));
        }
        Ok(Self { a, b, c })
    }

    pub fn n(&self) -> usize {
        self.a.rows
    }

    pub fn m(&self) -> usize {
        self.b.cols
    }

    pub fn p(&self) -> usize {
        self.c.rows
    }

    /// View as a general system model (no disturbances).
    pub fn to_model(&self, name: &str) -> Result<SystemModel> {
        let a = self.a.clone();
        let b = self.b.clone();
        let c = self.c.clone();
        let n = self.n();
        let f: DynFn = Arc::new(move |x, u, _w, dx| {
            let ax = a.mul_vec(x);
            let bu = b.mul_vec(u);
            for i in 0..n {
                dx[i] = ax[i] + bu[i];
            }
        });
        let h: OutFn = Arc::new(move |x, y| {
            let cx = c.mul_vec(x);
            y.copy_from_slice(&cx);
        });
        SystemModel::new(name, (self.n(), self.m(), 0, self.p()), f, h)
    }

    /// Observer driven by the plant's inputs and outputs:
    /// ż = Az + Bu + L(Cz − y).
    pub fn observer_model(&self, l: &Mat) -> Result<SystemModel> {
        if l.rows != self.n() || l.cols != self.p() {
            return Err(CoreError::Linear("gain dimensions must be n x p".into()));
        }
        // Coupled plant/observer model on [x; z] driven by u.
        let a = self.a.clone();
        let b = self.b.clone();
        let c = self.c.clone();
        let lm = l.clone();
        let n = self.n();
        let f: DynFn = Arc::new(move |xz, u, _w, dxz| {
            let (x, z) = xz.split_at(n);
            let ax = a.mul_vec(x);
            let az = a.mul_vec(z);
            let bu = b.mul_vec(u);
            let cerr: Vec<f64> = c
                .mul_vec(z)
                .iter()
                .zip(c.mul_vec(x))
                .map(|(cz, cx)| cz - cx)
                .collect();
            let lerr = lm.mul_vec(&cerr);
            for i in 0..n {
                dxz[i] = ax[i] + bu[i];
                dxz[n + i] = az[i] + bu[i] + lerr[i];
            }
        });
        let c2 = self.c.clone();
        let h: OutFn = Arc::new(move |xz, y| {
            let cx = c2.mul_vec(&xz[..c2.cols]);
            y.copy_from_slice(&cx);
        });
        SystemModel::new(
            "plant+observer",
            (2 * self.n(), self.m(), 0, self.p()),
            f,
            h,
        )
    }
}

/// Quadratic storage certificate V(x) = xᵀPx with output-injection gain L,
/// quadratic dissipation gains, and a fitted exponential decay envelope for
/// e^{t(A+LC)}.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct QuadraticCertificate {
    pub p: Mat,
    pub l: Mat,
    /// σ₁(r) = sigma1_coeff·r² (4‖P‖²‖B‖²).
    pub sigma1_coeff: f64,
    /// σ₂(r) = sigma2_coeff·r² (4‖P‖²‖L‖²).
    pub sigma2_coeff: f64,
    /// ‖e^{t(A+LC)}‖ ≤ k_decay·e^{−delta·t} on the fitted grid.
    pub k_decay: f64,
    pub delta: f64,
    /// (time span, sample count) behind the (K, δ) fit.
    pub fit_span: f64,
    pub fit_samples: usize,
}

impl QuadraticCertificate {
    pub fn v(&self, x: &[f64]) -> f64 {
        let px = self.p.mul_vec(x);
        x.iter().zip(&px).map(|(a, b)| a * b).sum()
    }

    pub fn grad_v(&self, x: &[f64]) -> Vec<f64> {
        self.p.mul_vec(x).iter().map(|v| 2.0 * v).collect()
    }

    pub fn sigma1(&self) -> Option<ComparisonFn> {
        (self.sigma1_coeff > 0.0).then(|| ComparisonFn::power(self.sigma1_coeff, 2.0))
    }

    pub fn sigma2(&self) -> Option<ComparisonFn> {
        (self.sigma2_coeff > 0.0).then(|| ComparisonFn::power(self.sigma2_coeff, 2.0))
    }

    /// β(r, t) = K·e^{−δt}·r in factored form.
    pub fn beta(&self) -> KLFn {
        KLFn::factored(
            ComparisonFn::power(self.k_decay, self.delta),
            ComparisonFn::power(1.0, 1.0 / self.delta),
        )
    }

    /// γ₁(r) = (K‖B‖/δ)·r and γ₂(r) = (K‖L‖/δ)·r from the decay envelope.
    pub fn linear_gains(&self, sys: &LinearSystem) -> (Option<ComparisonFn>, Option<ComparisonFn>) {
        let nb = spectral_norm(&sys.b);
        let nl = spectral_norm(&self.l);
        let g1 = (nb > 0.0).then(|| ComparisonFn::linear(self.k_decay * nb / self.delta));
        let g2 = (nl > 0.0).then(|| ComparisonFn::linear(self.k_decay * nl / self.delta));
        (g1, g2)
    }

    /// Eigenvalue bounds α₁(r) = λmin(P)r², α₂(r) = λmax(P)r² via the
    /// spectral norms of P and P⁻¹.
    pub fn state_bounds(&self) -> Result<(ComparisonFn, ComparisonFn)> {
        let lambda_max = spectral_norm(&self.p);
        // λmin(P) = 1/‖P⁻¹‖: invert by solving P·x = e_i.
        let n = self.p.rows;
        let mut inv = Mat::zeros(n, n);
        for i in 0..n {
            let mut e = vec![0.0; n];
            e[i] = 1.0;
            let col = super::mat::gauss_solve(&self.p, &e)?;
            for (r, v) in col.into_iter().enumerate() {
                inv.set(r, i, v);
            }
        }
        let lambda_min = 1.0 / spectral_norm(&inv);
        Ok((
            ComparisonFn::power(lambda_min, 2.0),
            ComparisonFn::power(lambda_max, 2.0),
        ))
    }
}

/// Build the quadratic certificate for a detectable pair: P solves the
/// Lyapunov equation for A + LC, the dissipation gains are
/// σᵢ(r) = 4‖P‖²‖·‖²r², and (K, δ) come from sampling ‖e^{t(A+LC)}‖ until
/// it has decayed below 1e-8.
pub fn synthesize_certificate(sys: &LinearSystem, l: &Mat) -> Result<QuadraticCertificate> {
    if l.rows != sys.n() || l.cols != sys.p() {
        return Err(CoreError::Linear(format!(
            "gain must be {}x{}, got {}x{}",
            sys.n(),
            sys.p(),
            l.rows,
            l.cols
        )));
    }
    let m = sys.a.add(&l.mul(&sys.c));
    let report = is_hurwitz(&m)?;
    if !report.hurwitz {
        return Err(CoreError::Linear(
            "A + LC is not Hurwitz; pick a different injection gain".into(),
        ));
    }
    let p = lyap_solve(&m)?;
    if p.symmetry_defect() > 1e-12 {
        return Err(CoreError::Linear("solved P is not symmetric".into()));
    }
    if cholesky(&p).is_none() {
        return Err(CoreError::Linear("solved P is not positive definite".into()));
    }
    let residual = lyap_residual(&m, &p);
    if residual > 1e-10 {
        return Err(CoreError::Linear(format!(
            "Lyapunov residual {residual:.3e} exceeds 1e-10"
        )));
    }

    let norm_p = spectral_norm(&p);
    let norm_b = spectral_norm(&sys.b);
    let norm_l = spectral_norm(l);

    // Decay envelope fit: sample ‖e^{tM}‖ on a uniform grid and wrap it by
    // K·e^{−δt} with a small cushion for inter-sample wobble.
    let samples = 400usize;
    let mut span = 1.0;
    let mut norms = sample_exp_norms(&m, span, samples);
    let mut tries = 0;
    while *norms.last().unwrap() > 1e-8 {
        span *= 2.0;
        norms = sample_exp_norms(&m, span, samples);
        tries += 1;
        if tries > 60 {
            return Err(CoreError::Linear(
                "decay envelope failed to settle; matrix may be near-degenerate".into(),
            ));
        }
    }
    let half = norms[samples / 2].max(1e-300);
    let tail = norms[samples - 1].max(1e-300);
    let delta = 0.9 * (-(tail / half).ln() / (span - span / 2.0).max(1e-12));
    if !(delta > 0.0) {
        return Err(CoreError::Linear("fitted decay rate is not positive".into()));
    }
    let mut k = 0.0f64;
    for (i, &s) in norms.iter().enumerate() {
        let t = span * i as f64 / (samples - 1) as f64;
        k = k.max(s * (delta * t).exp());
    }
    let k_decay = 1.02 * k.max(1.0);

    Ok(QuadraticCertificate {
        p,
        l: l.clone(),
        sigma1_coeff: 4.0 * norm_p * norm_p * norm_b * norm_b,
        sigma2_coeff: 4.0 * norm_p * norm_p * norm_l * norm_l,
        k_decay,
        delta,
        fit_span: span,
        fit_samples: samples,
    })
}

fn sample_exp_norms(m: &Mat, span: f64, samples: usize) -> Vec<f64> {
    let step = expm(&m.scale(span / (samples - 1) as f64));
    let mut acc = Mat::identity(m.rows);
    let mut out = Vec::with_capacity(samples);
    out.push(1.0);
    for _ in 1..samples {
        acc = acc.mul(&step);
        out.push(spectral_norm(&acc));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn double_integrator() -> LinearSystem {
        LinearSystem::new(
            Mat::from_rows(vec![vec![0.0, 1.0], vec![0.0, 0.0]]).unwrap(),
            Mat::column(vec![0.0, 1.0]),
            Mat::from_rows(vec![vec![1.0, 0.0]]).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn scalar_certificate_values() {
        // a = −1, b = 1, c = 1, L = 0: P = 1/2, σ₁(r) = 4·(1/2)²·1·r² = r²,
        // σ₂ vanishes.
        let sys = LinearSystem::new(
            Mat::from_rows(vec![vec![-1.0]]).unwrap(),
            Mat::from_rows(vec![vec![1.0]]).unwrap(),
            Mat::from_rows(vec![vec![1.0]]).unwrap(),
        )
        .unwrap();
        let l = Mat::from_rows(vec![vec![0.0]]).unwrap();
        let cert = synthesize_certificate(&sys, &l).unwrap();
        assert!((cert.p.at(0, 0) - 0.5).abs() < 1e-14);
        assert!((cert.sigma1_coeff - 1.0).abs() < 1e-12);
        assert_eq!(cert.sigma2_coeff, 0.0);
        assert!(cert.sigma2().is_none());
        assert!(cert.delta > 0.0 && cert.k_decay >= 1.0);
    }

    #[test]
    fn rejects_non_hurwitz_gain() {
        let sys = double_integrator();
        let l = Mat::column(vec![0.0, 0.0]);
        assert!(synthesize_certificate(&sys, &l).is_err());
    }

    #[test]
    fn double_integrator_certificate_residual() {
        let sys = double_integrator();
        let l = Mat::column(vec![-2.0, -1.0]);
        let cert = synthesize_certificate(&sys, &l).unwrap();
        let m = sys.a.add(&l.mul(&sys.c));
        assert!(lyap_residual(&m, &cert.p) <= 1e-10);
        assert!(cholesky(&cert.p).is_some());
        // ‖e^{tM}‖ ≤ K·e^{−δt} spot checks
        for &t in &[0.0, 0.5, 1.0, 3.0, 7.0] {
            let norm = spectral_norm(&expm(&m.scale(t)));
            assert!(
                norm <= cert.k_decay * (-cert.delta * t).exp() + 1e-12,
                "envelope fails at t={t}"
            );
        }
    }

    #[test]
    fn observer_error_decays_within_envelope() {
        use crate::dynamics::{simulate, norm as vnorm, Signal, SimOptions};
        let sys = double_integrator();
        let l = Mat::column(vec![-2.0, -1.0]);
        let cert = synthesize_certificate(&sys, &l).unwrap();
        let coupled = sys.observer_model(&l).unwrap();
        let u = Signal::piecewise(vec![0.0, 2.0], vec![vec![0.8], vec![-0.3]]).unwrap();
        let x0 = [1.0, -0.5, -0.2, 0.4];
        let e0 = vnorm(&[x0[0] - x0[2], x0[1] - x0[3]]);
        let traj = simulate(&coupled, &x0, &u, &Signal::zero(0), 8.0, &SimOptions::default())
            .unwrap();
        for (k, t) in traj.times.iter().enumerate() {
            let s = &traj.states[k];
            let err = vnorm(&[s[0] - s[2], s[1] - s[3]]);
            let bound = cert.k_decay * (-cert.delta * t).exp() * e0;
            assert!(err <= bound + 1e-9, "t={t}: {err} > {bound}");
        }
    }

    #[test]
    fn ioss_sum_estimate_along_trajectories() {
        // |x(t)| ≤ K e^{−δt}|ξ| + (K‖B‖/δ)‖u‖ + (K‖L‖/δ)‖y‖.
        use crate::dynamics::{norm as vnorm, simulate, Signal, SimOptions};
        let sys = double_integrator();
        let l = Mat::column(vec![-2.0, -1.0]);
        let cert = synthesize_certificate(&sys, &l).unwrap();
        let model = sys.to_model("double-integrator").unwrap();
        let nb = spectral_norm(&sys.b);
        let nl = spectral_norm(&l);
        let u = Signal::piecewise(vec![0.0, 1.5], vec![vec![0.5], vec![-1.0]]).unwrap();
        for x0 in [[0.7, -0.3], [2.0, 1.0], [-1.0, 0.1]] {
            let traj =
                simulate(&model, &x0, &u, &Signal::zero(0), 6.0, &SimOptions::default()).unwrap();
            let mut sup_y = 0.0f64;
            for (k, t) in traj.times.iter().enumerate() {
                sup_y = sup_y.max(vnorm(&traj.outputs[k]));
                let lhs = vnorm(&traj.states[k]);
                let rhs = cert.k_decay * (-cert.delta * t).exp() * vnorm(&x0)
                    + cert.k_decay * nb / cert.delta * u.sup_norm_until(*t)
                    + cert.k_decay * nl / cert.delta * sup_y;
                assert!(lhs <= rhs + 1e-9, "t={t}: {lhs} > {rhs}");
            }
        }
    }
}
