use serde::{Deserialize, Serialize};

use crate::dynamics::Signal;

/// Outcome of an empirical check. A property is never proven: it either
/// survived the battery or was falsified by a concrete witness.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    HoldsOnSamples,
    Falsified,
}

/// Replayable description of a falsifying sample.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Witness {
    pub x0: Vec<f64>,
    pub u: Signal,
    pub w: Signal,
    pub horizon: f64,
    /// Time of the worst violation.
    pub t: f64,
    pub lhs: f64,
    pub rhs: f64,
    /// Second half of an incremental pair, when applicable.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0_second: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub u_second: Option<Signal>,
}

/// Sample counts behind a verdict.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct BatteryStats {
    pub trajectories: usize,
    pub time_points: usize,
    pub skipped: usize,
    pub notes: Vec<String>,
}

/// Verdict plus the worst slack observed over every tested inequality.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CheckReport {
    pub verdict: Verdict,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub witness: Option<Witness>,
    /// min over all tested points of (rhs − lhs); nonnegative when the
    /// inequality held everywhere.
    pub worst_margin: f64,
    pub battery: BatteryStats,
}

impl CheckReport {
    pub fn holds(&self) -> bool {
        self.verdict == Verdict::HoldsOnSamples
    }
}

/// Absolute + relative slack below which an inequality violation is treated
/// as numerical noise rather than a falsification.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct FalsifyTol {
    pub abs: f64,
    pub rel: f64,
}

impl Default for FalsifyTol {
    fn default() -> Self {
        Self {
            abs: 1e-8,
            rel: 1e-8,
        }
    }
}

impl FalsifyTol {
    /// True when lhs exceeds rhs beyond numerical noise.
    pub fn violated(&self, lhs: f64, rhs: f64) -> bool {
        lhs > rhs + self.abs + self.rel * lhs.abs().max(rhs.abs()).max(1.0)
    }
}
