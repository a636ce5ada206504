use std::sync::Arc;

use crate::comparison::ComparisonFn;
use crate::dynamics::norm;
use crate::{CoreError, Result};

pub type ScalarFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
pub type GradFn = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;

/// How the candidate's gradient is obtained.
#[derive(Clone)]
pub enum Gradient {
    ClosedForm(GradFn),
    /// Central differences, step 1e-5·(1 + |x|).
    FiniteDifference,
}

/// The decay term of the dissipation inequality.
#[derive(Clone)]
pub enum DecayTerm {
    /// ∇V·f ≤ −α(|x|) + σ₁(|u|) + σ₂(|y|)
    StateGain(ComparisonFn),
    /// ∇V·f ≤ −V(x) + σ₁(|u|) + σ₂(|y|) (exponential-decay form)
    Value,
}

/// Storage-function candidate: the value map, its gradient, the sandwich
/// bounds α₁ ≤ V ≤ α₂, and the dissipation gains.
#[derive(Clone)]
pub struct LyapCandidate {
    pub name: String,
    v: ScalarFn,
    gradient: Gradient,
    pub alpha1: ComparisonFn,
    pub alpha2: ComparisonFn,
    pub decay: DecayTerm,
    /// Control gain; `None` means the slot is identically zero.
    pub sigma1: Option<ComparisonFn>,
    /// Output gain; `None` means the slot is identically zero.
    pub sigma2: Option<ComparisonFn>,
}

impl LyapCandidate {
    pub fn new(
        name: impl Into<String>,
        v: ScalarFn,
        gradient: Gradient,
        alpha1: ComparisonFn,
        alpha2: ComparisonFn,
        decay: DecayTerm,
        sigma1: Option<ComparisonFn>,
        sigma2: Option<ComparisonFn>,
    ) -> Self {
        Self {
            name: name.into(),
            v,
            gradient,
            alpha1,
            alpha2,
            decay,
            sigma1,
            sigma2,
        }
    }

    /// Quadratic candidate V(x) = x·(P x) from a symmetric matrix given as
    /// rows, with exact gradient 2Px.
    pub fn quadratic(
        name: impl Into<String>,
        p_rows: Vec<Vec<f64>>,
        alpha1: ComparisonFn,
        alpha2: ComparisonFn,
        decay: DecayTerm,
        sigma1: Option<ComparisonFn>,
        sigma2: Option<ComparisonFn>,
    ) -> Self {
        let p = p_rows;
        let p2 = p.clone();
        let v: ScalarFn = Arc::new(move |x| {
            let mut acc = 0.0;
            for (i, row) in p.iter().enumerate() {
                for (j, &pij) in row.iter().enumerate() {
                    acc += x[i] * pij * x[j];
                }
            }
            acc
        });
        let grad: GradFn = Arc::new(move |x| {
            (0..x.len())
                .map(|i| 2.0 * p2[i].iter().zip(x).map(|(pij, xj)| pij * xj).sum::<f64>())
                .collect()
        });
        Self::new(
            name,
            v,
            Gradient::ClosedForm(grad),
            alpha1,
            alpha2,
            decay,
            sigma1,
            sigma2,
        )
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        (self.v)(x)
    }

    pub fn value_fn(&self) -> ScalarFn {
        self.v.clone()
    }

    pub fn grad(&self, x: &[f64]) -> Vec<f64> {
        match &self.gradient {
            Gradient::ClosedForm(g) => g(x),
            Gradient::FiniteDifference => self.fd_grad(x),
        }
    }

    fn fd_grad(&self, x: &[f64]) -> Vec<f64> {
        let step = 1e-5 * (1.0 + norm(x));
        let mut xp = x.to_vec();
        (0..x.len())
            .map(|i| {
                xp[i] = x[i] + step;
                let fp = (self.v)(&xp);
                xp[i] = x[i] - step;
                let fm = (self.v)(&xp);
                xp[i] = x[i];
                (fp - fm) / (2.0 * step)
            })
            .collect()
    }

    /// Decay term value at a state.
    pub fn decay_at(&self, x: &[f64]) -> f64 {
        match &self.decay {
            DecayTerm::StateGain(alpha) => alpha.eval(norm(x)),
            DecayTerm::Value => self.value(x),
        }
    }

    pub fn sigma1_at(&self, r: f64) -> f64 {
        self.sigma1.as_ref().map_or(0.0, |s| s.eval(r))
    }

    pub fn sigma2_at(&self, r: f64) -> f64 {
        self.sigma2.as_ref().map_or(0.0, |s| s.eval(r))
    }

    /// Check the sandwich bounds and the gradient consistency (1e-4
    /// relative against finite differences, when closed-form) on a state
    /// grid.
    pub fn validate(&self, states: impl Iterator<Item = Vec<f64>>) -> Result<()> {
        if self.value(&vec![0.0; 8]) != 0.0 {
            // dimension-agnostic origin probe is not possible; checked per
            // state below instead
        }
        for x in states {
            let v = self.value(&x);
            let r = norm(&x);
            if v < 0.0 {
                return Err(CoreError::LyapunovEval(format!(
                    "V({x:?}) = {v} is negative"
                )));
            }
            let lo = self.alpha1.eval(r);
            let hi = self.alpha2.eval(r);
            if v < lo - 1e-9 * (1.0 + lo) || v > hi + 1e-9 * (1.0 + hi) {
                return Err(CoreError::LyapunovEval(format!(
                    "bounds violated at {x:?}: alpha1 = {lo}, V = {v}, alpha2 = {hi}"
                )));
            }
            if let Gradient::ClosedForm(_) = self.gradient {
                let g = self.grad(&x);
                let fd = self.fd_grad(&x);
                let scale = norm(&g).max(norm(&fd)).max(1e-9);
                let diff: Vec<f64> = g.iter().zip(&fd).map(|(a, b)| a - b).collect();
                if norm(&diff) > 1e-4 * scale {
                    return Err(CoreError::LyapunovEval(format!(
                        "closed-form gradient disagrees with finite differences at {x:?}"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Rectangular verification grid over states and controls. States inside
/// the near-origin exclusion radius are skipped (finite-difference noise
/// dominates there).
#[derive(Clone, Debug)]
pub struct GridSpec {
    pub x_ranges: Vec<(f64, f64)>,
    /// Points per state axis.
    pub x_points: usize,
    pub u_max: f64,
    /// Points per control axis.
    pub u_points: usize,
    pub exclude_origin_radius: f64,
}

impl GridSpec {
    pub fn centered(radius: f64, n: usize, x_points: usize) -> Self {
        Self {
            x_ranges: vec![(-radius, radius); n],
            x_points,
            u_max: 1.0,
            u_points: 9,
            exclude_origin_radius: 1e-6,
        }
    }

    pub fn with_controls(mut self, u_max: f64, u_points: usize) -> Self {
        self.u_max = u_max;
        self.u_points = u_points;
        self
    }

    pub fn states(&self) -> Vec<Vec<f64>> {
        cartesian(
            &self
                .x_ranges
                .iter()
                .map(|&(lo, hi)| grid_1d(lo, hi, self.x_points))
                .collect::<Vec<_>>(),
        )
        .into_iter()
        .filter(|x| norm(x) >= self.exclude_origin_radius)
        .collect()
    }

    pub fn controls(&self, m_u: usize) -> Vec<Vec<f64>> {
        if m_u == 0 {
            return vec![vec![]];
        }
        cartesian(&vec![grid_1d(-self.u_max, self.u_max, self.u_points); m_u])
    }
}

fn grid_1d(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    assert!(n >= 2);
    (0..n)
        .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
        .collect()
}

fn cartesian(axes: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = vec![vec![]];
    for axis in axes {
        let mut next = Vec::with_capacity(out.len() * axis.len());
        for base in &out {
            for &v in axis {
                let mut item = base.clone();
                item.push(v);
                next.push(item);
            }
        }
        out = next;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_candidate_gradient_is_exact() {
        let cand = LyapCandidate::quadratic(
            "half-square",
            vec![vec![0.5]],
            ComparisonFn::power(0.5, 2.0),
            ComparisonFn::power(0.5, 2.0),
            DecayTerm::Value,
            None,
            None,
        );
        assert_eq!(cand.value(&[2.0]), 2.0);
        assert_eq!(cand.grad(&[2.0]), vec![2.0]);
        cand.validate([vec![0.5], vec![-1.0], vec![3.0]].into_iter())
            .unwrap();
    }

    #[test]
    fn validation_rejects_bad_bounds() {
        let cand = LyapCandidate::quadratic(
            "half-square",
            vec![vec![0.5]],
            ComparisonFn::power(2.0, 2.0), // claims V ≥ 2r², false
            ComparisonFn::power(9.0, 2.0),
            DecayTerm::Value,
            None,
            None,
        );
        assert!(cand.validate([vec![1.0]].into_iter()).is_err());
    }

    #[test]
    fn grid_excludes_origin_neighborhood() {
        let grid = GridSpec::centered(1.0, 2, 5);
        let states = grid.states();
        assert!(states.iter().all(|x| norm(x) >= 1e-6));
        assert!(states.len() < 25);
    }
}
