use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::report::FalsifyTol;
use crate::dynamics::{disturbance_vertices, Signal, SimOptions, SystemModel};
use crate::{CoreError, Result};

/// Seeded sampling plan: initial conditions on log-spaced shells, random
/// piecewise-constant controls with 1–4 switches, disturbance signals over
/// the hypercube vertex set.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct Battery {
    pub seed: u64,
    pub trajectories: usize,
    /// Initial-condition radii; directions are drawn uniformly.
    pub shells: Vec<f64>,
    pub horizon: f64,
    pub u_amplitude: f64,
    pub max_switches: usize,
    pub sim: SimOptions,
    pub falsify_tol: FalsifyTol,
}

impl Default for Battery {
    fn default() -> Self {
        Self {
            seed: 0,
            trajectories: 64,
            shells: crate::comparison::log_spaced(6, 0.1, 10.0),
            horizon: 10.0,
            u_amplitude: 1.0,
            max_switches: 4,
            sim: SimOptions::default(),
            falsify_tol: FalsifyTol::default(),
        }
    }
}

/// One sampled run.
#[derive(Clone, Debug)]
pub struct BatteryItem {
    pub x0: Vec<f64>,
    pub u: Signal,
    pub w: Signal,
}

impl Battery {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// Generate the full item list up front (sequentially, so results are
    /// independent of later parallel evaluation order).
    pub fn generate(&self, sys: &SystemModel) -> Result<Vec<BatteryItem>> {
        if self.trajectories == 0 || self.shells.is_empty() {
            return Err(CoreError::InvalidBattery(
                "battery needs at least one trajectory and one shell".into(),
            ));
        }
        if self.horizon <= 0.0 {
            return Err(CoreError::InvalidBattery("horizon must be positive".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let vertices = disturbance_vertices(sys.m_w);
        let mut items = Vec::with_capacity(self.trajectories);
        for idx in 0..self.trajectories {
            let radius = self.shells[idx % self.shells.len()];
            let x0 = random_direction(&mut rng, sys.n)
                .into_iter()
                .map(|v| v * radius)
                .collect();
            let u = self.random_control(&mut rng, sys.m_u);
            let w = self.random_disturbance(&mut rng, &vertices, sys.m_w);
            items.push(BatteryItem { x0, u, w });
        }
        Ok(items)
    }

    /// Paired items sharing the disturbance, for incremental estimates.
    pub fn generate_pairs(
        &self,
        sys: &SystemModel,
    ) -> Result<Vec<(BatteryItem, Vec<f64>, Signal)>> {
        let items = self.generate(sys)?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed.wrapping_add(0x9e37_79b9));
        Ok(items
            .into_iter()
            .map(|item| {
                let radius = self.shells[rng.gen_range(0..self.shells.len())];
                let x0b = random_direction(&mut rng, sys.n)
                    .into_iter()
                    .map(|v| v * radius)
                    .collect();
                let ub = self.random_control(&mut rng, sys.m_u);
                (item, x0b, ub)
            })
            .collect())
    }

    fn random_control(&self, rng: &mut ChaCha8Rng, m_u: usize) -> Signal {
        if m_u == 0 {
            return Signal::zero(0);
        }
        let switches = rng.gen_range(1..=self.max_switches.max(1));
        let mut times = vec![0.0];
        for _ in 0..switches {
            times.push(rng.gen_range(0.0..self.horizon));
        }
        times.sort_by(f64::total_cmp);
        times.dedup();
        let values = (0..times.len())
            .map(|_| {
                (0..m_u)
                    .map(|_| rng.gen_range(-self.u_amplitude..=self.u_amplitude))
                    .collect()
            })
            .collect();
        Signal::piecewise(times, values).expect("generated switch times are valid")
    }

    fn random_disturbance(
        &self,
        rng: &mut ChaCha8Rng,
        vertices: &[Vec<f64>],
        m_w: usize,
    ) -> Signal {
        if m_w == 0 {
            return Signal::zero(0);
        }
        let switches = rng.gen_range(1..=self.max_switches.max(1));
        let mut times = vec![0.0];
        for _ in 0..switches {
            times.push(rng.gen_range(0.0..self.horizon));
        }
        times.sort_by(f64::total_cmp);
        times.dedup();
        let values = (0..times.len())
            .map(|_| vertices[rng.gen_range(0..vertices.len())].clone())
            .collect();
        Signal::piecewise(times, values).expect("generated switch times are valid")
    }
}

fn random_direction(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..n).map(|_| standard_normal(rng)).collect();
        let norm = crate::dynamics::norm(&v);
        if norm > 1e-6 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

fn standard_normal(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::fixture;

    #[test]
    fn generation_is_seed_deterministic() {
        let sys = fixture("linear-double-integrator").unwrap();
        let battery = Battery {
            trajectories: 10,
            ..Battery::default()
        };
        let a = battery.generate(&sys).unwrap();
        let b = battery.generate(&sys).unwrap();
        for (ia, ib) in a.iter().zip(&b) {
            assert_eq!(ia.x0, ib.x0);
            assert_eq!(ia.u, ib.u);
        }
        let c = battery.clone().with_seed(1).generate(&sys).unwrap();
        assert!(a.iter().zip(&c).any(|(ia, ic)| ia.x0 != ic.x0));
    }

    #[test]
    fn shells_set_initial_radii() {
        let sys = fixture("scalar-decay").unwrap();
        let battery = Battery {
            trajectories: 6,
            shells: vec![0.5, 2.0],
            ..Battery::default()
        };
        let items = battery.generate(&sys).unwrap();
        for (i, item) in items.iter().enumerate() {
            let r = crate::dynamics::norm(&item.x0);
            let want = if i % 2 == 0 { 0.5 } else { 2.0 };
            assert!((r - want).abs() < 1e-12);
        }
    }

    #[test]
    fn empty_battery_rejected() {
        let sys = fixture("scalar-decay").unwrap();
        let battery = Battery {
            trajectories: 0,
            ..Battery::default()
        };
        assert!(battery.generate(&sys).is_err());
    }
}
