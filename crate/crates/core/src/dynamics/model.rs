use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::{CoreError, Result};

/// Right-hand side evaluator: (x, u, w) -> dx, written into the buffer.
pub type DynFn = Arc<dyn Fn(&[f64], &[f64], &[f64], &mut [f64]) + Send + Sync>;
/// Output map evaluator: x -> y, written into the buffer.
pub type OutFn = Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;

/// Euclidean norm.
pub fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Control or disturbance signal over time.
///
/// Only representations that serialize (for witness replay) are provided;
/// piecewise-constant signals cover the sampling batteries.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Signal {
    Constant { value: Vec<f64> },
    /// `values[i]` on [times[i], times[i+1]); the last value extends to
    /// infinity. Times must be strictly increasing and start at 0.
    PiecewiseConstant {
        times: Vec<f64>,
        values: Vec<Vec<f64>>,
    },
}

impl Signal {
    pub fn zero(dim: usize) -> Self {
        Signal::Constant {
            value: vec![0.0; dim],
        }
    }

    pub fn constant(value: Vec<f64>) -> Self {
        Signal::Constant { value }
    }

    pub fn piecewise(times: Vec<f64>, values: Vec<Vec<f64>>) -> Result<Self> {
        if times.len() != values.len() || times.is_empty() {
            return Err(CoreError::InvalidSystem(
                "piecewise signal needs matching nonempty times/values".into(),
            ));
        }
        if times[0] != 0.0 || times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(CoreError::InvalidSystem(
                "piecewise signal times must start at 0 and increase strictly".into(),
            ));
        }
        Ok(Signal::PiecewiseConstant { times, values })
    }

    pub fn dim(&self) -> usize {
        match self {
            Signal::Constant { value } => value.len(),
            Signal::PiecewiseConstant { values, .. } => values[0].len(),
        }
    }

    pub fn eval(&self, t: f64) -> &[f64] {
        match self {
            Signal::Constant { value } => value,
            Signal::PiecewiseConstant { times, values } => {
                let idx = times.partition_point(|&s| s <= t).max(1) - 1;
                &values[idx]
            }
        }
    }

    /// Interior switch times (integration restarts there to keep the
    /// right-hand side smooth within every step).
    pub fn switch_times(&self) -> &[f64] {
        match self {
            Signal::Constant { .. } => &[],
            Signal::PiecewiseConstant { times, .. } => &times[1..],
        }
    }

    /// Running sup of |signal| over [0, t] (piecewise-constant exact).
    pub fn sup_norm_until(&self, t: f64) -> f64 {
        match self {
            Signal::Constant { value } => norm(value),
            Signal::PiecewiseConstant { times, values } => {
                let mut m = 0.0f64;
                for (i, v) in values.iter().enumerate() {
                    if times[i] > t {
                        break;
                    }
                    m = m.max(norm(v));
                }
                m
            }
        }
    }
}

/// A finite-dimensional model ẋ = f(x, u, w), y = h(x) with disturbances
/// ranging over the hypercube [−1, 1]^{m_w}.
#[derive(Clone)]
pub struct SystemModel {
    pub name: String,
    pub n: usize,
    pub m_u: usize,
    pub m_w: usize,
    pub p: usize,
    f: DynFn,
    h: OutFn,
    /// Finite verification subset of the disturbance hypercube.
    pub disturbance_samples: Vec<Vec<f64>>,
}

impl fmt::Debug for SystemModel {
    fn fmt(&self, fm: &mut fmt::Formatter<'_>) -> fmt::Result {
        fm.debug_struct("SystemModel")
            .field("name", &self.name)
            .field("n", &self.n)
            .field("m_u", &self.m_u)
            .field("m_w", &self.m_w)
            .field("p", &self.p)
            .field("disturbance_samples", &self.disturbance_samples.len())
            .finish()
    }
}

/// Hypercube vertices, the origin, and half-way points along every axis.
pub fn default_disturbance_samples(m_w: usize) -> Vec<Vec<f64>> {
    if m_w == 0 {
        return vec![vec![]];
    }
    assert!(m_w <= 12, "disturbance dimension too large to enumerate");
    let mut samples = Vec::with_capacity((1 << m_w) + 1 + 2 * m_w);
    for mask in 0..(1usize << m_w) {
        samples.push(
            (0..m_w)
                .map(|i| if mask & (1 << i) != 0 { 1.0 } else { -1.0 })
                .collect(),
        );
    }
    samples.push(vec![0.0; m_w]);
    for i in 0..m_w {
        for sign in [-1.0, 1.0] {
            let mut v = vec![0.0; m_w];
            v[i] = 0.5 * sign;
            samples.push(v);
        }
    }
    samples
}

/// Hypercube vertices only (the extreme points used by sup-type searches).
pub fn disturbance_vertices(m_w: usize) -> Vec<Vec<f64>> {
    if m_w == 0 {
        return vec![vec![]];
    }
    (0..(1usize << m_w))
        .map(|mask| {
            (0..m_w)
                .map(|i| if mask & (1 << i) != 0 { 1.0 } else { -1.0 })
                .collect()
        })
        .collect()
}

impl SystemModel {
    /// Register a model; rejects it unless f(0, 0, w) = 0 on every
    /// disturbance sample and h(0) = 0 (tolerance 1e-12).
    pub fn new(
        name: impl Into<String>,
        dims: (usize, usize, usize, usize),
        f: DynFn,
        h: OutFn,
    ) -> Result<Self> {
        let sys = Self::new_unchecked(name, dims, f, h);
        let zero_x = vec![0.0; sys.n];
        let zero_u = vec![0.0; sys.m_u];
        let mut buf = vec![0.0; sys.n];
        for w in &sys.disturbance_samples {
            (sys.f)(&zero_x, &zero_u, w, &mut buf);
            if norm(&buf) > 1e-12 {
                return Err(CoreError::InvalidSystem(format!(
                    "{}: f(0,0,w) = {buf:?} != 0 at w = {w:?}",
                    sys.name
                )));
            }
        }
        let mut out = vec![0.0; sys.p];
        (sys.h)(&zero_x, &mut out);
        if norm(&out) > 1e-12 {
            return Err(CoreError::InvalidSystem(format!(
                "{}: h(0) = {out:?} != 0",
                sys.name
            )));
        }
        Ok(sys)
    }

    /// Registration without the equilibrium checks. Reserved for models that
    /// deliberately violate them (the drift fixture with constant output).
    pub fn new_unchecked(
        name: impl Into<String>,
        (n, m_u, m_w, p): (usize, usize, usize, usize),
        f: DynFn,
        h: OutFn,
    ) -> Self {
        Self {
            name: name.into(),
            n,
            m_u,
            m_w,
            p,
            f,
            h,
            disturbance_samples: default_disturbance_samples(m_w),
        }
    }

    pub fn with_disturbance_samples(mut self, samples: Vec<Vec<f64>>) -> Self {
        self.disturbance_samples = samples;
        self
    }

    pub fn eval_f_into(&self, x: &[f64], u: &[f64], w: &[f64], out: &mut [f64]) {
        (self.f)(x, u, w, out);
    }

    pub fn eval_f(&self, x: &[f64], u: &[f64], w: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        (self.f)(x, u, w, &mut out);
        out
    }

    pub fn eval_h_into(&self, x: &[f64], out: &mut [f64]) {
        (self.h)(x, out);
    }

    pub fn output(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.p];
        (self.h)(x, &mut out);
        out
    }

    pub fn output_norm(&self, x: &[f64]) -> f64 {
        norm(&self.output(x))
    }

    pub fn dyn_fn(&self) -> DynFn {
        self.f.clone()
    }

    pub fn out_fn(&self) -> OutFn {
        self.h.clone()
    }
}
