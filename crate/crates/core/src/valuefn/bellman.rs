use std::io::Write;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::geometry::{GeometrySets, Region};
use super::grid::RectGrid;
use crate::checks::{BatteryStats, CheckReport, Verdict, Witness};
use crate::comparison::ComparisonFn;
use crate::dynamics::{
    disturbance_vertices, norm, simulate, trapezoid_prefix, Signal, SimOptions, SystemModel,
};
use crate::{CoreError, Result};

/// Convergence state of a node after value iteration.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NodeFlag {
    Converged,
    /// Still changing at the sweep cap: the node's trajectories never reach
    /// D inside the window, so the stored value is only a lower bound.
    Unreached,
}

/// Min-max cost-to-reach value function on grid nodes: zero on D, the
/// worst-disturbance best-control accumulated Ξ-cost elsewhere.
#[derive(Clone, Debug)]
pub struct GridValueFn {
    pub grid: RectGrid,
    pub values: Vec<f64>,
    pub regions: Vec<Region>,
    pub flags: Vec<NodeFlag>,
    pub xi: ComparisonFn,
    pub residual: f64,
    pub sweeps: usize,
}

impl GridValueFn {
    pub fn value_at(&self, point: &[f64]) -> Option<f64> {
        self.grid.interp(&self.values, point)
    }

    /// CSV export: node coordinates, value, region tag.
    pub fn write_csv(&self, mut out: impl Write) -> std::io::Result<()> {
        let n = self.grid.ndim();
        let mut header = String::new();
        for axis in 1..=n {
            header.push_str(&format!("x_{axis},"));
        }
        header.push_str("value,region");
        writeln!(out, "{header}")?;
        for flat in 0..self.grid.len() {
            let mut line = String::new();
            for c in self.grid.coords(flat) {
                line.push_str(&format!("{c:.12e},"));
            }
            line.push_str(&format!(
                "{:.12e},{}",
                self.values[flat],
                self.regions[flat].tag()
            ));
            writeln!(out, "{line}")?;
        }
        Ok(())
    }
}

/// Options for the fixed-point iteration.
#[derive(Clone, Debug)]
pub struct V0Options {
    /// Discrete lookahead Δ.
    pub time_step: f64,
    /// Sup-norm change that counts as converged.
    pub tol: f64,
    pub max_sweeps: usize,
    /// Add convex mixtures of vertex disturbances (centroid and pairwise
    /// midpoints) to the sup set.
    pub mixture_mode: bool,
}

impl Default for V0Options {
    fn default() -> Self {
        Self {
            time_step: 0.01,
            tol: 1e-6,
            max_sweeps: 10_000,
            mixture_mode: false,
        }
    }
}

/// Value iteration for the min-max cost-to-reach-D function of a
/// bounded-speed disturbance-only system:
///
/// V(ξ) = sup_d inf_v [ Δ·Ξ(|ξ|) + V(ξ + Δ·f̃(ξ, d, v)) ],  V|_D = 0,
///
/// with f̃ = f + 2·φ(ξ)·f₀(ξ)·v, the collar bump φ active between D and the
/// collar boundary, v on the {−1, 0, 1}ⁿ sign lattice, and multilinear
/// interpolation of the previous sweep. Leaving the grid window is
/// absorbing at zero cost, so window-exit values are lower bounds.
pub fn compute_v0(
    sys: &SystemModel,
    geo: &GeometrySets,
    xi: &ComparisonFn,
    opts: &V0Options,
) -> Result<GridValueFn> {
    if sys.m_u != 0 {
        return Err(CoreError::ValueFn(
            "the value function is defined for disturbance-only systems".into(),
        ));
    }
    if geo.grid.ndim() != sys.n {
        return Err(CoreError::ValueFn("grid/state dimension mismatch".into()));
    }
    let grid = &geo.grid;
    let nodes = grid.len();
    let vertices = disturbance_vertices(sys.m_w);

    // Disturbance set: vertices, optionally with convex mixtures (the
    // dynamics are averaged with the mixture weights).
    let mut d_weights: Vec<Vec<f64>> = Vec::new();
    for i in 0..vertices.len() {
        let mut w = vec![0.0; vertices.len()];
        w[i] = 1.0;
        d_weights.push(w);
    }
    if opts.mixture_mode && vertices.len() > 1 {
        d_weights.push(vec![1.0 / vertices.len() as f64; vertices.len()]);
        for i in 0..vertices.len() {
            for j in (i + 1)..vertices.len() {
                let mut w = vec![0.0; vertices.len()];
                w[i] = 0.5;
                w[j] = 0.5;
                d_weights.push(w);
            }
        }
    }

    // Precompute per node: coordinates, region, stage cost, averaged
    // dynamics per disturbance, and the control authority.
    struct NodeData {
        region: Region,
        stage_cost: f64,
        /// f(ξ, d) per disturbance weight vector.
        flows: Vec<Vec<f64>>,
        /// 2·φ(ξ)·f₀(ξ).
        authority: f64,
    }
    let node_data: Vec<NodeData> = (0..nodes)
        .into_par_iter()
        .map(|flat| {
            let x = grid.coords(flat);
            let region = geo.region(&x);
            let vertex_flows: Vec<Vec<f64>> =
                vertices.iter().map(|d| sys.eval_f(&x, &[], d)).collect();
            let f0 = vertex_flows.iter().map(|f| norm(f)).fold(0.0, f64::max);
            let flows = d_weights
                .iter()
                .map(|w| {
                    let mut avg = vec![0.0; sys.n];
                    for (wi, f) in w.iter().zip(&vertex_flows) {
                        if *wi != 0.0 {
                            for (a, b) in avg.iter_mut().zip(f) {
                                *a += wi * b;
                            }
                        }
                    }
                    avg
                })
                .collect();
            NodeData {
                region,
                stage_cost: opts.time_step * xi.eval(norm(&x)),
                flows,
                authority: 2.0 * geo.collar_bump(&x) * f0,
            }
        })
        .collect();
    // enforce the bounded-speed precondition on the sampled nodes
    for (flat, data) in node_data.iter().enumerate() {
        for f in &data.flows {
            if norm(f) > 1.0 + 1e-6 {
                return Err(CoreError::ValueFn(format!(
                    "speed |f| = {} exceeds 1 at node {:?}; slow the system first",
                    norm(f),
                    grid.coords(flat)
                )));
            }
        }
    }

    let v_lattice: Vec<Vec<f64>> = sign_lattice(sys.n);
    let mut prev = vec![0.0f64; nodes];
    let mut next = vec![0.0f64; nodes];
    let mut residual = f64::INFINITY;
    let mut sweeps = 0usize;
    let mut deltas: Vec<f64> = vec![0.0; nodes];

    while sweeps < opts.max_sweeps {
        sweeps += 1;
        next
            .par_iter_mut()
            .zip(deltas.par_iter_mut())
            .enumerate()
            .for_each(|(flat, (slot, delta))| {
                let data = &node_data[flat];
                if data.region.in_d() {
                    *slot = 0.0;
                    *delta = 0.0;
                    return;
                }
                let x = grid.coords(flat);
                let mut sup = 0.0f64;
                for flow in &data.flows {
                    let mut inf = f64::INFINITY;
                    if data.authority > 0.0 {
                        for v in &v_lattice {
                            let mut nx = x.clone();
                            for i in 0..nx.len() {
                                nx[i] += opts.time_step * (flow[i] + data.authority * v[i]);
                            }
                            let ctg = grid.interp(&prev, &nx).unwrap_or(0.0);
                            inf = inf.min(ctg);
                        }
                    } else {
                        let mut nx = x.clone();
                        for i in 0..nx.len() {
                            nx[i] += opts.time_step * flow[i];
                        }
                        inf = grid.interp(&prev, &nx).unwrap_or(0.0);
                    }
                    sup = sup.max(data.stage_cost + inf);
                }
                *slot = sup;
                *delta = (sup - prev[flat]).abs();
            });
        residual = deltas.iter().copied().fold(0.0, f64::max);
        std::mem::swap(&mut prev, &mut next);
        if residual < opts.tol {
            break;
        }
    }

    let flags: Vec<NodeFlag> = deltas
        .iter()
        .map(|&d| {
            if d < opts.tol {
                NodeFlag::Converged
            } else {
                NodeFlag::Unreached
            }
        })
        .collect();
    Ok(GridValueFn {
        grid: grid.clone(),
        values: prev,
        regions: node_data.into_iter().map(|d| d.region).collect(),
        flags,
        xi: xi.clone(),
        residual,
        sweeps,
    })
}

fn sign_lattice(n: usize) -> Vec<Vec<f64>> {
    let mut out = vec![vec![]];
    for _ in 0..n {
        let mut next = Vec::with_capacity(out.len() * 3);
        for base in &out {
            for s in [-1.0, 0.0, 1.0] {
                let mut item: Vec<f64> = base.clone();
                item.push(s);
                next.push(item);
            }
        }
        out = next;
    }
    out
}

/// Sampling plan for the dissipation check along real trajectories.
#[derive(Clone, Debug)]
pub struct DissipationBattery {
    pub seed: u64,
    pub spans: usize,
    /// Length of each tested span.
    pub horizon: f64,
    pub sim: SimOptions,
    /// Interpolation tolerance constant: the test allows a slack of
    /// `tol_constant · max grid spacing`. Raise it for value functions
    /// with steep gradients relative to the grid.
    pub tol_constant: f64,
}

impl Default for DissipationBattery {
    fn default() -> Self {
        Self {
            seed: 0,
            spans: 50,
            horizon: 0.5,
            sim: SimOptions::default(),
            tol_constant: 4.0,
        }
    }
}

/// Check the decrease property of the value function along system
/// trajectories confined to E∖(D ∪ collar):
///
/// V₀(x(t)) − V₀(x(0)) ≤ −∫₀ᵗ Ξ(|x(s)|) ds + interpolation slack.
pub fn check_v0_dissipation(
    v0: &GridValueFn,
    sys: &SystemModel,
    geo: &GeometrySets,
    battery: &DissipationBattery,
) -> Result<CheckReport> {
    let grid = &v0.grid;
    let slack = battery.tol_constant * grid.max_spacing();

    let mut rng = ChaCha8Rng::seed_from_u64(battery.seed);
    let vertices = disturbance_vertices(sys.m_w);
    let mut stats = BatteryStats::default();
    let mut worst_margin = f64::INFINITY;
    let mut witness: Option<Witness> = None;
    let mut tested = 0usize;

    let mut attempts = 0usize;
    while tested < battery.spans && attempts < battery.spans * 50 {
        attempts += 1;
        let x0: Vec<f64> = (0..grid.ndim())
            .map(|a| rng.gen_range(grid.mins[a]..grid.maxs[a]))
            .collect();
        if !geo.region(&x0).confined() {
            continue;
        }
        let w = if sys.m_w == 0 {
            Signal::zero(0)
        } else {
            Signal::constant(vertices[rng.gen_range(0..vertices.len())].clone())
        };
        let traj = match simulate(sys, &x0, &Signal::zero(sys.m_u), &w, battery.horizon, &battery.sim)
        {
            Ok(t) => t,
            Err(e) => {
                stats.skipped += 1;
                stats.notes.push(format!("span skipped: {e}"));
                continue;
            }
        };
        // longest confined prefix that stays on the grid
        let mut last = 0usize;
        for k in 0..traj.len() {
            let x = &traj.states[k];
            if !grid.contains(x) || !geo.region(x).confined() {
                break;
            }
            last = k;
        }
        if last < 1 {
            continue;
        }
        let cost = trapezoid_prefix(&traj, |k| v0.xi.eval(norm(&traj.states[k])));
        let v_start = v0.value_at(&traj.states[0]).unwrap();
        let mut span_points = 0usize;
        for k in 1..=last {
            let v_here = v0.value_at(&traj.states[k]).unwrap();
            let lhs = v_here - v_start;
            let rhs = -cost[k] + slack;
            span_points += 1;
            worst_margin = worst_margin.min(rhs - lhs);
            if lhs > rhs {
                let replace = match &witness {
                    Some(w) => lhs - rhs > w.lhs - w.rhs,
                    None => true,
                };
                if replace {
                    witness = Some(Witness {
                        x0: x0.clone(),
                        u: Signal::zero(sys.m_u),
                        w: w.clone(),
                        horizon: battery.horizon,
                        t: traj.times[k],
                        lhs,
                        rhs,
                        x0_second: None,
                        u_second: None,
                    });
                }
            }
        }
        if span_points > 0 {
            tested += 1;
            stats.trajectories += 1;
            stats.time_points += span_points;
        }
    }
    if stats.trajectories == 0 {
        return Err(CoreError::ValueFn(
            "no qualifying trajectory stayed in E minus the collar".into(),
        ));
    }
    stats
        .notes
        .push(format!("interpolation slack = {slack:.3e}"));
    Ok(CheckReport {
        verdict: if witness.is_some() {
            Verdict::Falsified
        } else {
            Verdict::HoldsOnSamples
        },
        witness,
        worst_margin,
        battery: stats,
    })
}
