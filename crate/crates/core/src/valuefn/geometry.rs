use serde::{Deserialize, Serialize};

use super::grid::RectGrid;
use crate::comparison::ComparisonFn;
use crate::dynamics::{norm, SystemModel};
use crate::{CoreError, Result};

/// Output-margin partition of the state space:
/// D = {|ξ| ≤ ρ(|h(ξ)|)}, the collar {ρ < |ξ| ≤ 1.5ρ}, the far region
/// E₁ = {|ξ| > 2ρ(|h(ξ)|)}, and the remaining part of E.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Region {
    D,
    Collar,
    E1,
    E,
}

impl Region {
    pub fn tag(&self) -> &'static str {
        match self {
            Region::D => "D",
            Region::Collar => "B",
            Region::E1 => "E1",
            Region::E => "E",
        }
    }

    pub fn in_d(&self) -> bool {
        matches!(self, Region::D)
    }

    /// Inside E and away from the collar.
    pub fn confined(&self) -> bool {
        matches!(self, Region::E | Region::E1)
    }
}

/// Margin geometry bound to a system's output map.
#[derive(Clone)]
pub struct GeometrySets {
    pub rho: ComparisonFn,
    pub grid: RectGrid,
    sys: SystemModel,
}

impl GeometrySets {
    pub fn new(sys: &SystemModel, rho: ComparisonFn, grid: RectGrid) -> Result<Self> {
        if grid.ndim() != sys.n {
            return Err(CoreError::ValueFn(format!(
                "grid dimension {} does not match the state dimension {}",
                grid.ndim(),
                sys.n
            )));
        }
        let geo = Self {
            rho,
            grid,
            sys: sys.clone(),
        };
        if !geo.region(&vec![0.0; sys.n]).in_d() {
            return Err(CoreError::ValueFn("the origin must belong to D".into()));
        }
        Ok(geo)
    }

    pub fn region(&self, x: &[f64]) -> Region {
        let r = norm(x);
        let margin = self.rho.eval(self.sys.output_norm(x));
        if r <= margin {
            Region::D
        } else if r <= 1.5 * margin {
            Region::Collar
        } else if r > 2.0 * margin {
            Region::E1
        } else {
            Region::E
        }
    }

    /// Collar bump: 1 on D, 0 off D ∪ collar, the smooth bump profile
    /// scaled to the collar width in between.
    pub fn collar_bump(&self, x: &[f64]) -> f64 {
        let r = norm(x);
        if r == 0.0 {
            return 1.0;
        }
        let margin = self.rho.eval(self.sys.output_norm(x));
        if margin <= 0.0 {
            return 0.0;
        }
        let q = r / margin;
        if q <= 1.0 {
            1.0
        } else if q >= 1.5 {
            0.0
        } else {
            let s = (q - 1.0) / 0.5;
            (-(s * s) / (1.0 - s * s)).exp()
        }
    }

    /// Distance from a point to D measured on the grid nodes (approximate;
    /// used only for discretization-tolerance bounds).
    pub fn grid_distance_to_d(&self, x: &[f64]) -> f64 {
        let mut best = f64::INFINITY;
        for flat in 0..self.grid.len() {
            let node = self.grid.coords(flat);
            if self.region(&node).in_d() {
                let d: f64 = x
                    .iter()
                    .zip(&node)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt();
                best = best.min(d);
            }
        }
        best
    }

    pub fn system(&self) -> &SystemModel {
        &self.sys
    }

    pub fn node_regions(&self) -> Vec<Region> {
        (0..self.grid.len())
            .map(|i| self.region(&self.grid.coords(i)))
            .collect()
    }
}
