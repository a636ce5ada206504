use std::io::Write;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::model::{norm, Signal, SystemModel};
use crate::{CoreError, Result};

/// Why a trajectory stopped.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "reason", rename_all = "kebab-case")]
pub enum Termination {
    HorizonReached,
    /// |x| crossed the blowup threshold; `t_esc` is the midpoint of the
    /// bracketing step.
    FiniteEscape { t_esc: f64 },
    EnteredSet { set: String, t: f64 },
}

/// The inputs a trajectory was produced with, kept for witness replay.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct InputRecord {
    pub u: Signal,
    pub w: Signal,
}

/// Time grid, states, and outputs of one integration run.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub outputs: Vec<Vec<f64>>,
    /// Local error estimate of the step ending at knot k+1 (length is one
    /// less than `times`).
    pub step_errors: Vec<f64>,
    pub termination: Termination,
    pub input_record: InputRecord,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn final_time(&self) -> f64 {
        *self.times.last().unwrap()
    }

    pub fn final_state(&self) -> &[f64] {
        self.states.last().unwrap()
    }

    /// State at an arbitrary time by linear interpolation between knots.
    pub fn state_at(&self, t: f64) -> Vec<f64> {
        let n = self.times.len();
        if t <= self.times[0] {
            return self.states[0].clone();
        }
        if t >= self.times[n - 1] {
            return self.states[n - 1].clone();
        }
        let idx = self.times.partition_point(|&s| s <= t) - 1;
        let (t0, t1) = (self.times[idx], self.times[idx + 1]);
        let w = (t - t0) / (t1 - t0);
        self.states[idx]
            .iter()
            .zip(&self.states[idx + 1])
            .map(|(a, b)| a * (1.0 - w) + b * w)
            .collect()
    }

    /// CSV export: t, x_1..x_n, y_1..y_p, |x|, |y|.
    pub fn write_csv(&self, mut out: impl Write) -> std::io::Result<()> {
        let n = self.states[0].len();
        let p = self.outputs[0].len();
        let mut header = String::from("t");
        for i in 1..=n {
            header.push_str(&format!(",x_{i}"));
        }
        for i in 1..=p {
            header.push_str(&format!(",y_{i}"));
        }
        header.push_str(",|x|,|y|");
        writeln!(out, "{header}")?;
        for k in 0..self.times.len() {
            let mut line = format!("{:.12e}", self.times[k]);
            for v in &self.states[k] {
                line.push_str(&format!(",{v:.12e}"));
            }
            for v in &self.outputs[k] {
                line.push_str(&format!(",{v:.12e}"));
            }
            line.push_str(&format!(
                ",{:.12e},{:.12e}",
                norm(&self.states[k]),
                norm(&self.outputs[k])
            ));
            writeln!(out, "{line}")?;
        }
        Ok(())
    }
}

/// Integrator options.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct SimOptions {
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// Norm threshold treated as finite escape.
    pub blowup: f64,
    pub max_steps: usize,
    pub h_max: Option<f64>,
    pub h_init: Option<f64>,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self {
            rel_tol: 1e-9,
            abs_tol: 1e-11,
            blowup: 1e9,
            max_steps: 5_000_000,
            h_max: None,
            h_init: None,
        }
    }
}

impl SimOptions {
    /// Same options with both tolerances divided by `factor`.
    pub fn tightened(&self, factor: f64) -> Self {
        Self {
            rel_tol: self.rel_tol / factor,
            abs_tol: self.abs_tol / factor,
            ..self.clone()
        }
    }
}

/// Membership-based stopping set for event-terminated runs.
#[derive(Clone)]
pub struct StopSet {
    pub id: String,
    pub member: Arc<dyn Fn(&[f64]) -> bool + Send + Sync>,
}

// Dormand-Prince 5(4) coefficients.
const A: [[f64; 6]; 6] = [
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
const B5: [f64; 7] = [
    35.0 / 384.0,
    0.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
    0.0,
];
// b5 - b4: error estimator weights.
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

/// Integrate ẋ = f(x, u(t), w(t)) with adaptive 4th/5th-order stepping.
///
/// Integration restarts at every input switch time so the right-hand side
/// stays smooth inside each accepted step. Crossing the blowup threshold
/// terminates the run as a finite escape; a step-size underflow below it is
/// reported as a stiffness failure.
pub fn simulate(
    sys: &SystemModel,
    x0: &[f64],
    u: &Signal,
    w: &Signal,
    horizon: f64,
    opts: &SimOptions,
) -> Result<Trajectory> {
    simulate_until(sys, x0, u, w, horizon, opts, None)
}

pub fn simulate_until(
    sys: &SystemModel,
    x0: &[f64],
    u: &Signal,
    w: &Signal,
    horizon: f64,
    opts: &SimOptions,
    stop: Option<&StopSet>,
) -> Result<Trajectory> {
    if horizon <= 0.0 {
        return Err(CoreError::InvalidSystem("horizon must be positive".into()));
    }
    if x0.len() != sys.n || u.dim() != sys.m_u || w.dim() != sys.m_w {
        return Err(CoreError::InvalidSystem(format!(
            "dimension mismatch: x0 {} vs n {}, u {} vs m_u {}, w {} vs m_w {}",
            x0.len(),
            sys.n,
            u.dim(),
            sys.m_u,
            w.dim(),
            sys.m_w
        )));
    }

    // Segment boundaries at input switches.
    let mut breaks: Vec<f64> = u
        .switch_times()
        .iter()
        .chain(w.switch_times())
        .copied()
        .filter(|&t| t > 0.0 && t < horizon)
        .collect();
    breaks.push(horizon);
    breaks.sort_by(f64::total_cmp);
    breaks.dedup();

    let n = sys.n;
    let mut traj = Trajectory {
        times: vec![0.0],
        states: vec![x0.to_vec()],
        outputs: vec![sys.output(x0)],
        step_errors: Vec::new(),
        termination: Termination::HorizonReached,
        input_record: InputRecord {
            u: u.clone(),
            w: w.clone(),
        },
    };

    if norm(x0) >= opts.blowup {
        traj.termination = Termination::FiniteEscape { t_esc: 0.0 };
        return Ok(traj);
    }
    if let Some(s) = stop {
        if (s.member)(x0) {
            traj.termination = Termination::EnteredSet {
                set: s.id.clone(),
                t: 0.0,
            };
            return Ok(traj);
        }
    }

    let mut t = 0.0;
    let mut x = x0.to_vec();
    let mut k: Vec<Vec<f64>> = (0..7).map(|_| vec![0.0; n]).collect();
    let mut stage = vec![0.0; n];
    let mut x_new = vec![0.0; n];
    let mut steps = 0usize;

    for &t_end in &breaks {
        let span = t_end - t;
        if span <= 0.0 {
            continue;
        }
        // Inputs are piecewise constant, so they are frozen per segment;
        // this keeps the right-hand side exact at segment endpoints.
        let u_val = u.eval(t).to_vec();
        let w_val = w.eval(t).to_vec();
        let deriv = |x: &[f64], out: &mut [f64]| {
            sys.eval_f_into(x, &u_val, &w_val, out);
        };

        deriv(&x, &mut k[0]);
        let mut h = opts.h_init.unwrap_or_else(|| {
            let scale = opts.abs_tol + opts.rel_tol * norm(&x);
            let d = norm(&k[0]);
            (0.01 * scale.max(1e-300) / d.max(1e-12)).min(span / 10.0).max(1e-12)
        });
        if let Some(hm) = opts.h_max {
            h = h.min(hm);
        }

        'segment: loop {
            steps += 1;
            if steps > opts.max_steps {
                return Err(CoreError::Stiffness {
                    t,
                    state_norm: norm(&x),
                });
            }
            // Snap to the segment end once the remainder is below the f64
            // resolution of the boundary itself.
            if t_end - t <= 4.0 * f64::EPSILON * t_end.abs().max(1.0) {
                t = t_end;
                break 'segment;
            }
            h = h.min(t_end - t);
            // Steps may shrink below the f64 resolution of absolute time
            // while a solution blows up: the state keeps marching even when
            // t + h rounds back to t. Give up only when the state is not
            // radially escaping.
            if h < 1e-16 * (1.0 + t.abs()) {
                let mut fx = vec![0.0; n];
                deriv(&x, &mut fx);
                let radial: f64 = x.iter().zip(&fx).map(|(a, b)| a * b).sum();
                let escaping = radial > 0.0 && norm(&x) > 1e3;
                if !escaping || h < 1e-300 {
                    return Err(CoreError::Stiffness {
                        t,
                        state_norm: norm(&x),
                    });
                }
            }

            // Stages 2..7 (k1 already holds f at the step start).
            let mut finite = true;
            for s in 1..7 {
                for i in 0..n {
                    let mut acc = 0.0;
                    for (j, kj) in k.iter().enumerate().take(s) {
                        let a = A[s - 1][j];
                        if a != 0.0 {
                            acc += a * kj[i];
                        }
                    }
                    stage[i] = x[i] + h * acc;
                }
                if stage.iter().any(|v| !v.is_finite()) {
                    finite = false;
                    break;
                }
                deriv(&stage, &mut k[s]);
            }

            let mut err_sq = 0.0;
            if finite {
                for i in 0..n {
                    let mut acc5 = 0.0;
                    let mut err_i = 0.0;
                    for s in 0..7 {
                        if B5[s] != 0.0 {
                            acc5 += B5[s] * k[s][i];
                        }
                        if E[s] != 0.0 {
                            err_i += E[s] * k[s][i];
                        }
                    }
                    x_new[i] = x[i] + h * acc5;
                    let scale = opts.abs_tol + opts.rel_tol * x[i].abs().max(x_new[i].abs());
                    let e = h * err_i / scale;
                    err_sq += e * e;
                }
                if x_new.iter().any(|v| !v.is_finite()) {
                    finite = false;
                }
            }
            let err = if finite {
                (err_sq / n as f64).sqrt()
            } else {
                f64::INFINITY
            };

            if err <= 1.0 {
                // Accepted.
                let t_prev = t;
                t += h;
                x.copy_from_slice(&x_new);
                let crossed_blowup = norm(&x) >= opts.blowup;
                let last_recorded = *traj.times.last().unwrap();
                // Record a knot only when time advanced representably, or
                // when this is the blowup crossing (nudged if necessary).
                if t > last_recorded || crossed_blowup {
                    let t_record = if t > last_recorded {
                        t
                    } else {
                        next_up(last_recorded)
                    };
                    traj.times.push(t_record);
                    traj.states.push(x.clone());
                    traj.outputs.push(sys.output(&x));
                    let scale = opts.abs_tol + opts.rel_tol * norm(&x);
                    traj.step_errors.push(err * scale);
                }

                if crossed_blowup {
                    traj.termination = Termination::FiniteEscape {
                        t_esc: 0.5 * (t_prev + t),
                    };
                    return Ok(traj);
                }
                if let Some(s) = stop {
                    if (s.member)(&x) {
                        let tc = bisect_crossing(&traj, s, t_prev, t);
                        traj.termination = Termination::EnteredSet {
                            set: s.id.clone(),
                            t: tc,
                        };
                        return Ok(traj);
                    }
                }
                if t >= t_end {
                    break 'segment;
                }
                k.swap(0, 6); // FSAL: last stage is f at the new point
                let grow = (0.9 * err.max(1e-10).powf(-0.2)).clamp(0.2, 5.0);
                h *= grow;
                if let Some(hm) = opts.h_max {
                    h = h.min(hm);
                }
            } else {
                let shrink = if finite {
                    (0.9 * err.powf(-0.2)).clamp(0.1, 0.9)
                } else {
                    0.25
                };
                h *= shrink;
            }
        }
    }
    Ok(traj)
}

fn next_up(v: f64) -> f64 {
    f64::from_bits(v.to_bits() + 1)
}

fn bisect_crossing(traj: &Trajectory, stop: &StopSet, mut lo: f64, mut hi: f64) -> f64 {
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if (stop.member)(&traj.state_at(mid)) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Trapezoid quadrature of g along the trajectory grid.
pub fn trapezoid_along(traj: &Trajectory, mut g: impl FnMut(usize) -> f64) -> f64 {
    let mut acc = 0.0;
    let mut prev = g(0);
    for k in 1..traj.times.len() {
        let cur = g(k);
        acc += 0.5 * (prev + cur) * (traj.times[k] - traj.times[k - 1]);
        prev = cur;
    }
    acc
}

/// Running trapezoid integrals of g at every knot.
pub fn trapezoid_prefix(traj: &Trajectory, mut g: impl FnMut(usize) -> f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(traj.times.len());
    let mut acc = 0.0;
    let mut prev = g(0);
    out.push(0.0);
    for k in 1..traj.times.len() {
        let cur = g(k);
        acc += 0.5 * (prev + cur) * (traj.times[k] - traj.times[k - 1]);
        out.push(acc);
        prev = cur;
    }
    out
}
