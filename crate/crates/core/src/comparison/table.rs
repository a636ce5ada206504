use serde::{Deserialize, Serialize};

use crate::{CoreError, Result};

/// Interpolation rule between table knots.
///
/// `LogLog` interpolates linearly in (ln r, ln v) space, which reproduces
/// pure power laws exactly between knots. The first segment (anchored at the
/// origin) is always linear so the table stays Lipschitz at 0.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Interp {
    Linear,
    LogLog,
}

/// Strictly increasing piecewise interpolation table through (0, 0).
///
/// Beyond the last knot the table either extrapolates its last segment
/// (`unbounded`, class K-infinity behaviour) or clamps to the last value
/// (class K saturation).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MonotoneTable {
    rs: Vec<f64>,
    vs: Vec<f64>,
    unbounded: bool,
    interp: Interp,
}

/// Knot layout used when sampling a scalar function into a table.
#[derive(Clone, Debug)]
pub struct TableSpec {
    /// Number of positive knots (a knot at 0 is always prepended).
    pub knots: usize,
    /// Smallest positive knot.
    pub r_min: f64,
    /// Largest knot.
    pub r_max: f64,
    pub unbounded: bool,
    pub interp: Interp,
}

impl Default for TableSpec {
    fn default() -> Self {
        Self {
            knots: 64,
            r_min: 1e-6,
            r_max: 1e6,
            unbounded: true,
            interp: Interp::Linear,
        }
    }
}

impl TableSpec {
    pub fn on(r_min: f64, r_max: f64) -> Self {
        Self {
            r_min,
            r_max,
            ..Self::default()
        }
    }

    pub fn with_knots(mut self, knots: usize) -> Self {
        self.knots = knots;
        self
    }

    pub fn bounded(mut self) -> Self {
        self.unbounded = false;
        self
    }

    pub fn log_log(mut self) -> Self {
        self.interp = Interp::LogLog;
        self
    }
}

/// Log-spaced grid from `lo` to `hi` inclusive, `n >= 2` points.
pub fn log_spaced(n: usize, lo: f64, hi: f64) -> Vec<f64> {
    assert!(n >= 2 && lo > 0.0 && hi > lo);
    let (ll, lh) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| (ll + (lh - ll) * i as f64 / (n - 1) as f64).exp())
        .collect()
}

/// Uniform grid from `lo` to `hi` inclusive, `n >= 2` points.
pub fn lin_spaced(n: usize, lo: f64, hi: f64) -> Vec<f64> {
    assert!(n >= 2 && hi > lo);
    (0..n)
        .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
        .collect()
}

impl MonotoneTable {
    /// Build a table from knot pairs. A (0, 0) knot is prepended when absent.
    /// Values are nudged upward where needed so the table is strictly
    /// increasing; since tables in this crate act as upper envelopes, the
    /// nudge never invalidates a domination claim.
    pub fn from_knots(
        rs: Vec<f64>,
        vs: Vec<f64>,
        unbounded: bool,
        interp: Interp,
    ) -> Result<Self> {
        if rs.len() != vs.len() || rs.is_empty() {
            return Err(CoreError::InvalidGain(
                "table needs matching, nonempty knot vectors".into(),
            ));
        }
        let mut rs = rs;
        let mut vs = vs;
        if rs[0] > 0.0 {
            rs.insert(0, 0.0);
            vs.insert(0, 0.0);
        }
        if rs[0] != 0.0 || vs[0] != 0.0 {
            return Err(CoreError::InvalidGain(
                "table must start at the origin knot (0, 0)".into(),
            ));
        }
        for w in rs.windows(2) {
            if !(w[1] > w[0]) || !w[1].is_finite() {
                return Err(CoreError::InvalidGain(format!(
                    "table abscissas must be strictly increasing, got {} after {}",
                    w[1], w[0]
                )));
            }
        }
        for v in &vs {
            if !v.is_finite() || *v < 0.0 {
                return Err(CoreError::InvalidGain(format!(
                    "table values must be finite and nonnegative, got {v}"
                )));
            }
        }
        for i in 1..vs.len() {
            let floor = vs[i - 1] + f64::max(1e-307, vs[i - 1] * 1e-15);
            if vs[i] < floor {
                vs[i] = floor;
            }
        }
        Ok(Self {
            rs,
            vs,
            unbounded,
            interp,
        })
    }

    /// Sample a scalar function into a table with log-spaced knots.
    pub fn sample(f: impl Fn(f64) -> f64, spec: &TableSpec) -> Result<Self> {
        let rs = log_spaced(spec.knots, spec.r_min, spec.r_max);
        let vs: Vec<f64> = rs.iter().map(|&r| f(r)).collect();
        Self::from_knots(rs, vs, spec.unbounded, spec.interp)
    }

    pub fn unbounded(&self) -> bool {
        self.unbounded
    }

    pub fn knots(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.rs.iter().copied().zip(self.vs.iter().copied())
    }

    pub fn last_knot(&self) -> (f64, f64) {
        (self.rs[self.rs.len() - 1], self.vs[self.vs.len() - 1])
    }

    pub fn eval(&self, r: f64) -> f64 {
        if r <= 0.0 {
            return 0.0;
        }
        let n = self.rs.len();
        let (r_last, v_last) = self.last_knot();
        if r >= r_last {
            if !self.unbounded {
                return v_last;
            }
            return self.extrapolate_high(r);
        }
        // partition_point: first index with rs[i] > r; segment is [idx-1, idx]
        let idx = self.rs.partition_point(|&knot| knot <= r).min(n - 1);
        let (r0, r1) = (self.rs[idx - 1], self.rs[idx]);
        let (v0, v1) = (self.vs[idx - 1], self.vs[idx]);
        match self.interp {
            Interp::Linear => v0 + (v1 - v0) * (r - r0) / (r1 - r0),
            Interp::LogLog => {
                if idx == 1 || v0 <= 0.0 {
                    v0 + (v1 - v0) * (r - r0) / (r1 - r0)
                } else {
                    let w = (r.ln() - r0.ln()) / (r1.ln() - r0.ln());
                    (v0.ln() + (v1.ln() - v0.ln()) * w).exp()
                }
            }
        }
    }

    fn extrapolate_high(&self, r: f64) -> f64 {
        let n = self.rs.len();
        let (r0, r1) = (self.rs[n - 2], self.rs[n - 1]);
        let (v0, v1) = (self.vs[n - 2], self.vs[n - 1]);
        match self.interp {
            Interp::Linear => v1 + (v1 - v0) * (r - r1) / (r1 - r0),
            Interp::LogLog => {
                if v0 <= 0.0 {
                    v1 + (v1 - v0) * (r - r1) / (r1 - r0)
                } else {
                    let slope = (v1.ln() - v0.ln()) / (r1.ln() - r0.ln());
                    (v1.ln() + slope * (r.ln() - r1.ln())).exp()
                }
            }
        }
    }

    /// Inverse table obtained by swapping axes. The result maps the value
    /// range back to abscissas; it inherits the extrapolation flag.
    pub fn inverse(&self) -> Self {
        Self {
            rs: self.vs.clone(),
            vs: self.rs.clone(),
            unbounded: self.unbounded,
            interp: self.interp,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_interp_hits_knots_and_midpoints() {
        let t = MonotoneTable::from_knots(
            vec![0.0, 1.0, 2.0],
            vec![0.0, 10.0, 40.0],
            true,
            Interp::Linear,
        )
        .unwrap();
        assert_eq!(t.eval(1.0), 10.0);
        assert_eq!(t.eval(1.5), 25.0);
        assert_eq!(t.eval(0.0), 0.0);
        // unbounded: last-segment slope 30 continues
        assert_eq!(t.eval(3.0), 70.0);
    }

    #[test]
    fn bounded_table_clamps() {
        let t = MonotoneTable::from_knots(
            vec![0.0, 1.0, 2.0],
            vec![0.0, 1.0, 1.5],
            false,
            Interp::Linear,
        )
        .unwrap();
        assert_eq!(t.eval(10.0), 1.5);
    }

    #[test]
    fn log_log_reproduces_powers_between_knots() {
        let spec = TableSpec::on(1e-4, 1e3).with_knots(40).log_log();
        let t = MonotoneTable::sample(|r| 3.0 * r * r, &spec).unwrap();
        for &r in &[0.01, 0.37, 2.0, 55.0, 4000.0] {
            let got = t.eval(r);
            assert!((got - 3.0 * r * r).abs() <= 1e-10 * 3.0 * r * r, "r={r} got={got}");
        }
    }

    #[test]
    fn inverse_swaps_axes() {
        let spec = TableSpec::on(1e-3, 1e3).with_knots(80);
        let t = MonotoneTable::sample(|r| r / 2.0, &spec).unwrap();
        let inv = t.inverse();
        assert!((inv.eval(5.0) - 10.0).abs() < 1e-9);
    }

    #[test]
    fn rejects_nonmonotone_abscissas() {
        let r = MonotoneTable::from_knots(
            vec![0.0, 2.0, 1.0],
            vec![0.0, 1.0, 2.0],
            true,
            Interp::Linear,
        );
        assert!(r.is_err());
    }
}
